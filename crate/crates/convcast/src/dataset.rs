//! Supervised sliding-window dataset construction.
//!
//! A feature series becomes overlapping 14-day windows, each paired with the
//! next day's close as the regression target and an Up/Down label relative to
//! the window's final ("anchor") close. Splits are chronological 70/15/15 and
//! feature scaling is fitted on the training slice only.

use crate::error::{Error, Result};
use crate::ingest::FeatureSeries;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const DEFAULT_WINDOW_LEN: usize = 14;

/// Realized or predicted movement of the next-day close relative to the
/// anchor close. Flat days count as Down, so Up strictly means a rise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "up",
            Direction::Down => "down",
        })
    }
}

/// The one comparator used both to label samples and to turn model
/// predictions into directions: Up iff `target > anchor`.
pub fn direction_of(anchor_close: f64, target_close: f64) -> Direction {
    if target_close > anchor_close {
        Direction::Up
    } else {
        Direction::Down
    }
}

/// One supervised sample: a `window_len x 2` feature block (rows oldest to
/// newest, columns (close, volume)), the next-day target close, and the label.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// (close, volume) per day, oldest first; length = window_len.
    pub feature_rows: Vec<(f64, f64)>,
    pub anchor_close: f64,
    pub target_close: f64,
    pub label: Direction,
}

/// Slide a `window_len`-day window over the series; sample `i` covers days
/// `[i, i + window_len)` and is labeled by day `i + window_len`.
pub fn build_windows(series: &FeatureSeries, window_len: usize) -> Result<Vec<WindowSample>> {
    let n = series.len();
    if n < window_len + 1 {
        return Err(Error::SeriesTooShort {
            len: n,
            window: window_len,
        });
    }
    let points = series.points();
    let mut samples = Vec::with_capacity(n - window_len);
    for i in 0..n - window_len {
        let feature_rows: Vec<(f64, f64)> = points[i..i + window_len]
            .iter()
            .map(|p| (p.close, p.volume))
            .collect();
        let anchor_close = feature_rows[window_len - 1].0;
        let target_close = points[i + window_len].close;
        samples.push(WindowSample {
            feature_rows,
            anchor_close,
            target_close,
            label: direction_of(anchor_close, target_close),
        });
    }
    Ok(samples)
}

/// Chronological split proportions (train, validation, test).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios(pub f64, pub f64, pub f64);

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios(0.70, 0.15, 0.15)
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let r = [self.0, self.1, self.2];
        if r.iter().any(|&x| x <= 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::BadRatios(r));
        }
        Ok(())
    }
}

/// Floor-based split: train gets `floor(r0 * n)`, validation
/// `floor(r1 * n)`, test the remainder. Order is preserved; every split must
/// be non-empty.
pub fn split_chronological(n: usize, ratios: SplitRatios) -> Result<(usize, usize)> {
    ratios.validate()?;
    if n < 3 {
        return Err(Error::DegenerateSplit(format!("{n} samples cannot fill three splits")));
    }
    let train_end = (ratios.0 * n as f64).floor() as usize;
    let val_end = train_end + (ratios.1 * n as f64).floor() as usize;
    if train_end == 0 || val_end == train_end || val_end == n {
        return Err(Error::DegenerateSplit(format!(
            "splits {}/{}/{} from {n} samples leave a split empty",
            train_end,
            val_end - train_end,
            n - val_end
        )));
    }
    Ok((train_end, val_end))
}

/// Train-split feature scaling: closes are divided by the maximum close seen
/// in the training slice (features and targets alike, keeping scaled prices
/// strictly positive), volumes are z-scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub price_divisor: f64,
    pub volume_mean: f64,
    pub volume_std: f64,
}

pub const VOLUME_STD_FLOOR: f64 = 1e-12;

/// Fit from training samples only. The divisor covers the slice's feature
/// closes and target closes, so every scaled training price lies in (0, 1].
pub fn fit_scaler(train: &[WindowSample]) -> Result<Scaler> {
    if train.is_empty() {
        return Err(Error::DegenerateSplit("cannot fit a scaler on an empty train slice".into()));
    }
    let mut max_close = f64::MIN;
    let mut vol_sum = 0.0;
    let mut count = 0usize;
    for s in train {
        for &(close, volume) in &s.feature_rows {
            max_close = max_close.max(close);
            vol_sum += volume;
            count += 1;
        }
        max_close = max_close.max(s.target_close);
    }
    let volume_mean = vol_sum / count as f64;
    let mut var_sum = 0.0;
    for s in train {
        for &(_, volume) in &s.feature_rows {
            var_sum += (volume - volume_mean) * (volume - volume_mean);
        }
    }
    let volume_std = (var_sum / count as f64).sqrt().max(VOLUME_STD_FLOOR);
    Ok(Scaler {
        price_divisor: max_close,
        volume_mean,
        volume_std,
    })
}

impl Scaler {
    #[inline]
    pub fn scale_close(&self, close: f64) -> f64 {
        close / self.price_divisor
    }

    #[inline]
    pub fn scale_volume(&self, volume: f64) -> f64 {
        (volume - self.volume_mean) / self.volume_std
    }

    /// Scaled `[window_len, 2]` feature matrix and scaled target for one sample.
    pub fn apply(&self, sample: &WindowSample) -> (Tensor, f64) {
        let window = sample.feature_rows.len();
        let mut data = Vec::with_capacity(window * 2);
        for &(close, volume) in &sample.feature_rows {
            data.push(self.scale_close(close));
            data.push(self.scale_volume(volume));
        }
        let features = Tensor::new(&[window, 2], data).expect("window sample is rectangular");
        (features, self.scale_close(sample.target_close))
    }
}

/// Immutable windowed dataset: samples, chronological split bounds, and the
/// train-fitted scaler.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    samples: Vec<WindowSample>,
    window_len: usize,
    train_end: usize,
    val_end: usize,
    scaler: Scaler,
}

/// Which split a sample index falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl WindowedDataset {
    pub fn build(series: &FeatureSeries, window_len: usize, ratios: SplitRatios) -> Result<Self> {
        let samples = build_windows(series, window_len)?;
        let (train_end, val_end) = split_chronological(samples.len(), ratios)?;
        let scaler = fit_scaler(&samples[..train_end])?;
        Ok(WindowedDataset {
            samples,
            window_len,
            train_end,
            val_end,
            scaler,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn samples(&self) -> &[WindowSample] {
        &self.samples
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn split_bounds(&self) -> (usize, usize) {
        (self.train_end, self.val_end)
    }

    pub fn split_of(&self, index: usize) -> Split {
        if index < self.train_end {
            Split::Train
        } else if index < self.val_end {
            Split::Val
        } else {
            Split::Test
        }
    }

    pub fn indices(&self, split: Split) -> std::ops::Range<usize> {
        match split {
            Split::Train => 0..self.train_end,
            Split::Val => self.train_end..self.val_end,
            Split::Test => self.val_end..self.len(),
        }
    }

    /// Train plus validation, in order — the stage-2 retraining pool.
    pub fn train_val_indices(&self) -> std::ops::Range<usize> {
        0..self.val_end
    }

    /// Stack the given samples into a scaled `[B, window, 2]` feature batch
    /// and `[B, 1]` target batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let b = indices.len();
        assert!(b > 0, "empty batch");
        let mut features = Vec::with_capacity(b * self.window_len * 2);
        let mut targets = Vec::with_capacity(b);
        for &i in indices {
            let (x, y) = self.scaler.apply(&self.samples[i]);
            features.extend_from_slice(x.data());
            targets.push(y);
        }
        (
            Tensor::new(&[b, self.window_len, 2], features).expect("batch is rectangular"),
            Tensor::new(&[b, 1], targets).expect("one target per sample"),
        )
    }

    /// Scaled anchor close of a sample, for the direction comparator.
    pub fn scaled_anchor(&self, index: usize) -> f64 {
        self.scaler.scale_close(self.samples[index].anchor_close)
    }

    /// Audit dump: one row per sample with its split assignment and labeling
    /// inputs.
    pub fn write_dump<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sample_index,split,anchor_close,target_close,label")?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{}",
                self.split_of(i),
                s.anchor_close,
                s.target_close,
                s.label
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::FeaturePoint;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn series_of(closes: &[f64]) -> FeatureSeries {
        let base = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        FeatureSeries::new(
            closes
                .iter()
                .enumerate()
                .map(|(i, &close)| FeaturePoint {
                    date: base + chrono::Days::new(i as u64),
                    close,
                    volume: 1000.0 + i as f64,
                })
                .collect(),
        )
        .unwrap()
    }

    fn ramp(n: usize) -> FeatureSeries {
        series_of(&(0..n).map(|i| 100.0 + i as f64).collect::<Vec<_>>())
    }

    #[test]
    fn window_count_and_coverage() {
        let series = ramp(20);
        let samples = build_windows(&series, 14).unwrap();
        assert_eq!(samples.len(), 6);
        // sample i covers days [i, i+14) and is labeled by day i+14
        for (i, s) in samples.iter().enumerate() {
            assert_eq!(s.feature_rows.len(), 14);
            for (t, &(close, _)) in s.feature_rows.iter().enumerate() {
                assert_eq!(close, series.points()[i + t].close);
            }
            assert_eq!(s.target_close, series.points()[i + 14].close);
            assert_eq!(s.anchor_close, series.points()[i + 13].close);
        }
    }

    #[test]
    fn boundary_lengths() {
        assert_eq!(build_windows(&ramp(15), 14).unwrap().len(), 1);
        assert!(matches!(
            build_windows(&ramp(14), 14),
            Err(Error::SeriesTooShort { len: 14, window: 14 })
        ));
    }

    #[test]
    fn direction_labels_and_tie_policy() {
        assert_eq!(direction_of(100.0, 101.0), Direction::Up);
        assert_eq!(direction_of(100.0, 99.0), Direction::Down);
        assert_eq!(direction_of(100.0, 100.0), Direction::Down);
    }

    #[test]
    fn split_floor_arithmetic() {
        let (train_end, val_end) = split_chronological(7545, SplitRatios::default()).unwrap();
        assert_eq!(train_end, 5281);
        assert_eq!(val_end - train_end, 1131);
        assert_eq!(7545 - val_end, 1133);

        let (t, v) = split_chronological(100, SplitRatios::default()).unwrap();
        assert_eq!((t, v - t, 100 - v), (70, 15, 15));
    }

    #[test]
    fn degenerate_split_rejected() {
        assert!(matches!(
            split_chronological(3, SplitRatios::default()),
            Err(Error::DegenerateSplit(_))
        ));
        assert!(matches!(
            split_chronological(100, SplitRatios(0.5, 0.2, 0.2)),
            Err(Error::BadRatios(_))
        ));
    }

    #[test]
    fn scaler_price_division() {
        let series = series_of(&[350.0; 20]);
        let mut samples = build_windows(&series, 14).unwrap();
        samples[0].feature_rows[0].0 = 700.0; // train max
        let scaler = fit_scaler(&samples[..4]).unwrap();
        assert_eq!(scaler.price_divisor, 700.0);
        assert_eq!(scaler.scale_close(350.0), 0.5);
    }

    #[test]
    fn scaler_volume_zscore_identity() {
        let series = ramp(30);
        let samples = build_windows(&series, 14).unwrap();
        let scaler = fit_scaler(&samples[..10]).unwrap();
        assert!(scaler.scale_volume(scaler.volume_mean).abs() < 1e-12);
    }

    #[test]
    fn constant_volume_floors_std() {
        let series = FeatureSeries::synthetic_sine(40, 10.0, 5.0, 0.0, 100.0, 777.0);
        let samples = build_windows(&series, 14).unwrap();
        let scaler = fit_scaler(&samples[..10]).unwrap();
        assert_eq!(scaler.volume_std, VOLUME_STD_FLOOR);
        // all scaled volumes are exactly zero
        let (x, _) = scaler.apply(&samples[0]);
        for t in 0..14 {
            assert_eq!(x.at2(t, 1), 0.0);
        }
    }

    #[test]
    fn empty_train_slice_rejected() {
        assert!(matches!(fit_scaler(&[]), Err(Error::DegenerateSplit(_))));
    }

    #[test]
    fn dataset_partition_and_leakage_free_refit() {
        let series = ramp(120);
        let ds = WindowedDataset::build(&series, 14, SplitRatios::default()).unwrap();
        assert_eq!(ds.len(), 106);
        let (train_end, val_end) = ds.split_bounds();
        assert_eq!(
            ds.indices(Split::Train).len() + ds.indices(Split::Val).len() + ds.indices(Split::Test).len(),
            ds.len()
        );
        assert!(train_end < val_end && val_end < ds.len());

        // refitting on the train slice alone reproduces the stored statistics
        let refit = fit_scaler(&ds.samples()[..train_end]).unwrap();
        assert_eq!(&refit, ds.scaler());
    }

    #[test]
    fn batch_shapes_and_target_scaling() {
        let series = ramp(40);
        let ds = WindowedDataset::build(&series, 14, SplitRatios::default()).unwrap();
        let (x, y) = ds.batch(&[0, 1, 2]);
        assert_eq!(x.shape(), &[3, 14, 2]);
        assert_eq!(y.shape(), &[3, 1]);
        let expected = ds.scaler().scale_close(ds.samples()[0].target_close);
        assert_eq!(y.at2(0, 0), expected);
    }

    #[test]
    fn dump_lists_every_sample() {
        let series = ramp(40);
        let ds = WindowedDataset::build(&series, 14, SplitRatios::default()).unwrap();
        let mut out = Vec::new();
        ds.write_dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), ds.len() + 1);
        assert!(text.starts_with("sample_index,split,anchor_close,target_close,label"));
        assert!(text.contains(",train,"));
        assert!(text.contains(",test,"));
    }

    proptest! {
        // Positive scaling never flips a label: the comparator only cares
        // about order, which a positive divisor preserves.
        #[test]
        fn scaling_preserves_direction(
            anchor in 0.01f64..10_000.0,
            target in 0.01f64..10_000.0,
            divisor in 0.01f64..100_000.0,
        ) {
            prop_assert_eq!(
                direction_of(anchor, target),
                direction_of(anchor / divisor, target / divisor)
            );
        }

        // Window consistency: overlapping windows reproduce the exact series.
        #[test]
        fn windows_reconstruct_series(n in 16usize..80, seed in 0u64..200) {
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(7);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                100.0 + 50.0 * ((state >> 11) as f64 / (1u64 << 53) as f64)
            };
            let closes: Vec<f64> = (0..n).map(|_| next()).collect();
            let series = series_of(&closes);
            let samples = build_windows(&series, 14).unwrap();
            prop_assert_eq!(samples.len(), n - 14);

            let mut rebuilt = vec![f64::NAN; n];
            for (i, s) in samples.iter().enumerate() {
                for (t, &(close, _)) in s.feature_rows.iter().enumerate() {
                    rebuilt[i + t] = close;
                }
                rebuilt[i + 14] = s.target_close;
            }
            prop_assert_eq!(rebuilt, closes);
        }

        // Labels computed on scaled values agree with labels on raw values.
        #[test]
        fn scaled_samples_keep_labels(n in 21usize..60, seed in 0u64..200) {
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(11);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                100.0 + 200.0 * ((state >> 11) as f64 / (1u64 << 53) as f64)
            };
            let closes: Vec<f64> = (0..n).map(|_| next()).collect();
            let series = series_of(&closes);
            let ds = WindowedDataset::build(&series, 14, SplitRatios::default()).unwrap();
            for i in 0..ds.len() {
                let (x, y) = ds.batch(&[i]);
                let scaled_anchor = x.at3(0, 13, 0);
                prop_assert_eq!(direction_of(scaled_anchor, y.at2(0, 0)), ds.samples()[i].label);
            }
        }
    }
}
