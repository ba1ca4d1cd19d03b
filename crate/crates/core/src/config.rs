//! Run settings as flat `key = value` pairs.
//!
//! The same keys are accepted from a config file, from command-line flags and are
//! echoed into results-file headers, so a header can be pasted back as a config file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::SliceWindow;
use crate::pipeline::PipelineConfig;
use crate::projection::{GradientAssignment, StencilRule};
use crate::scalar::Scalar;

/// Every recognised key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("dt", "slice duration, seconds"),
    ("events_per_slice", "slice by event count instead of duration (0 = off)"),
    ("seed", "random seed"),
    ("dither", "spread whole-pixel events over their pixel before binning"),
    ("step_x", "initial coarse step for h_x, bins"),
    ("step_y", "initial coarse step for h_y, bins"),
    ("step_z", "initial coarse step for h_z (auto = derived from step_x)"),
    (
        "step_theta",
        "initial coarse step for theta, radians (auto = derived from step_x)",
    ),
    ("step_growth", "coarse step growth while the direction holds"),
    ("step_shrink", "coarse step shrink on a direction flip"),
    ("tolerance", "coarse convergence bound on the model change"),
    ("max_iterations", "coarse iteration cap"),
    ("fine_tolerance", "fine-stage bound on the density gain of one sweep"),
    ("fine_step", "initial fine perturbation, bins"),
    ("fine_decay", "fine perturbation decay"),
    ("fine_min_step", "smallest fine perturbation, bins"),
    ("max_sweeps", "fine sweep cap"),
    ("bin_size", "count-image bin size, pixels"),
    ("coarse_bin_size", "coarse time-image bin size, pixels"),
    ("stencil", "gradient stencil rule: complete | hold-center"),
    ("assignment", "dot/cross assignment: physical | literal"),
    ("center", "warp center as x,y pixels (auto = image center)"),
    ("threshold", "detection threshold on the normalized time score"),
    ("negative_tail", "also detect scores below -threshold"),
    ("min_area", "smallest object, detection bins"),
    ("detection_bin_size", "detection grid bin size, pixels"),
    ("min_object_events", "fewest events to fit an object model"),
    ("refine_background", "re-fit the background without object events"),
    ("q_position", "process noise on the centroid, px^2"),
    ("q_model", "process noise on model parameters"),
    ("q_velocity", "process noise on velocity, (px/frame)^2"),
    ("r_position", "measurement noise on the centroid, px^2"),
    ("r_model", "measurement noise on model parameters"),
    (
        "initial_velocity_variance",
        "velocity variance of a new track, (px/frame)^2",
    ),
    ("gate", "association gate, pixels"),
    ("max_missed", "frames a track may go unmatched"),
    ("psd_tolerance", "covariance PSD check tolerance"),
];

/// Everything a run needs besides its input and output paths.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub pipeline: PipelineConfig<T>,
    pub window: SliceWindow<T>,
    pub seed: u64,
    /// Dither inputs whose coordinates are all whole pixels.
    pub dither: bool,
}

impl<T: Scalar> Default for RunConfig<T> {
    fn default() -> Self {
        RunConfig {
            pipeline: PipelineConfig::default(),
            window: SliceWindow::default(),
            seed: 0,
            dither: true,
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::invalid(format!("bad value for {key}: {value:?}"))
}

fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| bad(key, value))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

fn auto<T: Scalar>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

impl<T: Scalar> RunConfig<T> {
    /// Sets one key. Keys may use `-` in place of `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let key = key.as_str();
        let value = value.trim();
        let o = &mut self.pipeline.optimizer;
        let d = &mut self.pipeline.detection;
        let k = &mut self.pipeline.tracker;
        match key {
            "dt" => {
                let dt: T = num(key, value)?;
                self.window = SliceWindow::Duration(dt);
            }
            "events_per_slice" => {
                let n: usize = num(key, value)?;
                if n > 0 {
                    self.window = SliceWindow::Count(n);
                } else if let SliceWindow::Count(_) = self.window {
                    self.window = SliceWindow::default();
                }
            }
            "seed" => self.seed = num(key, value)?,
            "dither" => self.dither = flag(key, value)?,
            "step_x" => o.step_x = num(key, value)?,
            "step_y" => o.step_y = num(key, value)?,
            "step_z" => o.step_z = auto(key, value)?,
            "step_theta" => o.step_theta = auto(key, value)?,
            "step_growth" => o.step_growth = num(key, value)?,
            "step_shrink" => o.step_shrink = num(key, value)?,
            "tolerance" => o.tolerance = num(key, value)?,
            "max_iterations" => o.max_iterations = num(key, value)?,
            "fine_tolerance" => o.fine_tolerance = num(key, value)?,
            "fine_step" => o.fine_step = num(key, value)?,
            "fine_decay" => o.fine_decay = num(key, value)?,
            "fine_min_step" => o.fine_min_step = num(key, value)?,
            "max_sweeps" => o.max_sweeps = num(key, value)?,
            "bin_size" => o.bin_size = num(key, value)?,
            "coarse_bin_size" => o.coarse_bin_size = num(key, value)?,
            "stencil" => {
                o.gradient.stencil = match value {
                    "complete" => StencilRule::Complete,
                    "hold-center" | "hold_center" => StencilRule::HoldCenter,
                    _ => return Err(bad(key, value)),
                }
            }
            "assignment" => {
                o.gradient.assignment = match value {
                    "physical" => GradientAssignment::Physical,
                    "literal" => GradientAssignment::Literal,
                    _ => return Err(bad(key, value)),
                }
            }
            "center" => {
                o.center = if value == "auto" {
                    None
                } else {
                    let (x, y) = value.split_once(',').ok_or_else(|| bad(key, value))?;
                    Some((num(key, x.trim())?, num(key, y.trim())?))
                }
            }
            "threshold" => d.threshold = num(key, value)?,
            "negative_tail" => d.negative_tail = flag(key, value)?,
            "min_area" => d.min_area = num(key, value)?,
            "detection_bin_size" => d.bin_size = num(key, value)?,
            "min_object_events" => d.min_object_events = num(key, value)?,
            "refine_background" => self.pipeline.refine_background = flag(key, value)?,
            "q_position" => k.q_position = num(key, value)?,
            "q_model" => k.q_model = num(key, value)?,
            "q_velocity" => k.q_velocity = num(key, value)?,
            "r_position" => k.r_position = num(key, value)?,
            "r_model" => k.r_model = num(key, value)?,
            "initial_velocity_variance" => k.initial_velocity_variance = num(key, value)?,
            "gate" => k.gate = num(key, value)?,
            "max_missed" => k.max_missed = num(key, value)?,
            "psd_tolerance" => k.psd_tolerance = num(key, value)?,
            _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Current value of every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let o = &self.pipeline.optimizer;
        let d = &self.pipeline.detection;
        let k = &self.pipeline.tracker;
        let opt = |v: Option<T>| v.map_or_else(|| "auto".to_string(), |v| v.to_string());
        let (dt, count) = match self.window {
            SliceWindow::Duration(dt) => (dt.to_string(), 0),
            SliceWindow::Count(n) => match SliceWindow::<T>::default() {
                SliceWindow::Duration(dt) => (dt.to_string(), n),
                SliceWindow::Count(_) => ("auto".to_string(), n),
            },
        };
        let values = [
            dt,
            count.to_string(),
            self.seed.to_string(),
            self.dither.to_string(),
            o.step_x.to_string(),
            o.step_y.to_string(),
            opt(o.step_z),
            opt(o.step_theta),
            o.step_growth.to_string(),
            o.step_shrink.to_string(),
            o.tolerance.to_string(),
            o.max_iterations.to_string(),
            o.fine_tolerance.to_string(),
            o.fine_step.to_string(),
            o.fine_decay.to_string(),
            o.fine_min_step.to_string(),
            o.max_sweeps.to_string(),
            o.bin_size.to_string(),
            o.coarse_bin_size.to_string(),
            match o.gradient.stencil {
                StencilRule::Complete => "complete".into(),
                StencilRule::HoldCenter => "hold-center".into(),
            },
            match o.gradient.assignment {
                GradientAssignment::Physical => "physical".into(),
                GradientAssignment::Literal => "literal".into(),
            },
            o.center.map_or_else(|| "auto".to_string(), |(x, y)| format!("{x},{y}")),
            d.threshold.to_string(),
            d.negative_tail.to_string(),
            d.min_area.to_string(),
            d.bin_size.to_string(),
            d.min_object_events.to_string(),
            self.pipeline.refine_background.to_string(),
            k.q_position.to_string(),
            k.q_model.to_string(),
            k.q_velocity.to_string(),
            k.r_position.to_string(),
            k.r_model.to_string(),
            k.initial_velocity_variance.to_string(),
            k.gate.to_string(),
            k.max_missed.to_string(),
            k.psd_tolerance.to_string(),
        ];
        KEYS.iter().map(|(key, _)| *key).zip(values).collect()
    }

    /// `key = value` lines for a results-file header (without the `#`).
    pub fn header_lines(&self) -> Vec<String> {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}")).collect()
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let body = line.trim().trim_start_matches('#').trim();
            let is_comment = line.trim_start().starts_with('#');
            if body.is_empty() || (is_comment && !body.contains('=')) {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: "expected key = value".into(),
                    text: line.into(),
                });
            };
            // Commented-out pairs with unknown keys (record columns and the like) are ignored.
            if is_comment && !KEYS.iter().any(|(k, _)| *k == key.trim()) {
                continue;
            }
            self.set(key, value).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
                text: line.into(),
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.optimizer.validate()?;
        self.pipeline.detection.validate()?;
        self.pipeline.tracker.validate()?;
        match self.window {
            SliceWindow::Duration(dt) if !(dt > T::zero()) || !dt.is_finite() => {
                Err(Error::invalid(format!("dt must be positive, got {dt}")))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_round_trip() {
        let mut cfg = RunConfig::<f64>::default();
        cfg.set("threshold", "0.2").unwrap();
        cfg.set("step-z", "0.01").unwrap();
        cfg.set("center", "10,20.5").unwrap();
        cfg.set("negative_tail", "true").unwrap();
        cfg.set("events_per_slice", "5000").unwrap();
        cfg.set("stencil", "hold-center").unwrap();
        let text: String = cfg.header_lines().iter().map(|l| format!("# {l}\n")).collect();
        let mut back = RunConfig::<f64>::default();
        back.apply_text(&text, Path::new("h")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn defaults_round_trip_and_cover_every_key() {
        let cfg = RunConfig::<f32>::default();
        let entries = cfg.entries();
        assert_eq!(entries.len(), KEYS.len());
        let mut back = RunConfig::<f32>::default();
        for (k, v) in &entries {
            back.set(k, v).unwrap();
        }
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut cfg = RunConfig::<f64>::default();
        let err = cfg
            .apply_text("dt = 0.01\n\nthreshold = x\n", Path::new("c"))
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(cfg.apply_text("nonsense\n", Path::new("c")).is_err());
        assert!(cfg.set("no_such_key", "1").is_err());
        assert_eq!(cfg.window, SliceWindow::Duration(0.01));
    }

    #[test]
    fn header_comments_without_pairs_are_skipped() {
        let mut cfg = RunConfig::<f64>::default();
        cfg.apply_text(
            "# frame_time track_id cx\n# gate = 12\n# columns = a b\n",
            Path::new("c"),
        )
        .unwrap();
        assert_eq!(cfg.pipeline.tracker.gate, 12.0);
    }
}
