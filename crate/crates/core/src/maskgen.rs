//! Learning-mask construction for the five ablation scenarios.
//!
//! Each scenario turns the tri-state labels, the background-object mask `O`,
//! the positive-disk mask `D`, and (for objectness scenarios) the watershed
//! bundle into a supervised-loss mask `m`, an optional objectness-loss
//! region mask `m_r`, and the effective labels actually fed to the loss.
//! Materializing the effective labels per scenario makes every ablation row
//! a serializable artifact.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BinaryMask, GridError, LabelRaster, LabelState};
use crate::objectness::ObjectnessBundle;

pub const DEFAULT_OBJECTNESS_THRESHOLD: f64 = 0.2;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("scenario {0} uses the objectness loss but no bundle was provided")]
    MissingBundle(ScenarioName),
    #[error("shape mismatch: {0}")]
    Shape(#[from] GridError),
    #[error("unknown scenario name: {0}")]
    UnknownScenario(String),
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("scenario config io: {0}")]
    ConfigIo(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Baseline,
    Obj,
    Mask,
    MaskObj,
    MaskObjThresh,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 5] = [
        ScenarioName::Baseline,
        ScenarioName::Obj,
        ScenarioName::Mask,
        ScenarioName::MaskObj,
        ScenarioName::MaskObjThresh,
    ];
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioName::Baseline => "baseline",
            ScenarioName::Obj => "obj",
            ScenarioName::Mask => "mask",
            ScenarioName::MaskObj => "maskobj",
            ScenarioName::MaskObjThresh => "maskobjthresh",
        };
        f.write_str(s)
    }
}

impl FromStr for ScenarioName {
    type Err = MaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(ScenarioName::Baseline),
            "obj" => Ok(ScenarioName::Obj),
            "mask" => Ok(ScenarioName::Mask),
            "maskobj" => Ok(ScenarioName::MaskObj),
            "maskobjthresh" => Ok(ScenarioName::MaskObjThresh),
            other => Err(MaskError::UnknownScenario(other.to_string())),
        }
    }
}

/// How the positive training labels are produced for a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Positives are the 1.5 m disks; they replace the point expansion and
    /// everything outside the disks is labeled negative.
    DiskReplace,
    /// Positives are the square point expansion (7×7 at 0.2 m/px).
    Point7x7,
}

/// One ablation-table row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    pub beta: f64,
    /// Objectness threshold `t`; only defined for the thresholded scenario.
    pub threshold: Option<f64>,
    pub label_mode: LabelMode,
}

impl ScenarioConfig {
    /// The canonical five rows.
    pub fn builtin(name: ScenarioName) -> Self {
        match name {
            ScenarioName::Baseline => Self {
                name,
                beta: 0.0,
                threshold: None,
                label_mode: LabelMode::DiskReplace,
            },
            ScenarioName::Obj => Self {
                name,
                beta: 1.0,
                threshold: None,
                label_mode: LabelMode::Point7x7,
            },
            ScenarioName::Mask => Self {
                name,
                beta: 0.0,
                threshold: None,
                label_mode: LabelMode::Point7x7,
            },
            ScenarioName::MaskObj => Self {
                name,
                beta: 1.0,
                threshold: None,
                label_mode: LabelMode::Point7x7,
            },
            ScenarioName::MaskObjThresh => Self {
                name,
                beta: 1.0,
                threshold: Some(DEFAULT_OBJECTNESS_THRESHOLD),
                label_mode: LabelMode::Point7x7,
            },
        }
    }

    pub fn uses_objectness(&self) -> bool {
        self.beta != 0.0
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        match self.name {
            ScenarioName::Baseline | ScenarioName::Mask => {
                if self.beta != 0.0 {
                    return Err(MaskError::InvalidConfig(format!(
                        "{} requires beta = 0, got {}",
                        self.name, self.beta
                    )));
                }
            }
            _ => {
                if self.beta == 0.0 {
                    return Err(MaskError::InvalidConfig(format!(
                        "{} requires beta != 0",
                        self.name
                    )));
                }
            }
        }
        if self.threshold.is_some() && self.name != ScenarioName::MaskObjThresh {
            return Err(MaskError::InvalidConfig(format!(
                "threshold t is only defined for maskobjthresh, not {}",
                self.name
            )));
        }
        if self.name == ScenarioName::MaskObjThresh && self.threshold.is_none() {
            return Err(MaskError::InvalidConfig(
                "maskobjthresh requires a threshold".into(),
            ));
        }
        Ok(())
    }
}

/// Declarative scenario table; mirrors the ablation table one block per row.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioTable {
    pub scenario: Vec<ScenarioConfigEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfigEntry {
    pub name: String,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub label_mode: Option<LabelMode>,
}

impl ScenarioTable {
    pub fn from_toml_path(path: &Path) -> Result<Vec<ScenarioConfig>, MaskError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| MaskError::ConfigIo(e.to_string()))?;
        let table: ScenarioTable =
            toml::from_str(&text).map_err(|e| MaskError::InvalidConfig(e.to_string()))?;
        table
            .scenario
            .iter()
            .map(|entry| {
                let name: ScenarioName = entry.name.parse()?;
                let mut cfg = ScenarioConfig::builtin(name);
                if let Some(beta) = entry.beta {
                    cfg.beta = beta;
                }
                if let Some(t) = entry.threshold {
                    cfg.threshold = Some(t);
                }
                if let Some(mode) = entry.label_mode {
                    cfg.label_mode = mode;
                }
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

/// The pair of pixel selectors for the two loss terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearningMasks {
    /// Supervised-loss mask.
    pub m: BinaryMask,
    /// Objectness-loss region mask; `None` when the scenario has no
    /// objectness term.
    pub m_r: Option<BinaryMask>,
}

/// Masks plus the effective labels for one scenario on one grid.
#[derive(Debug, Clone)]
pub struct ScenarioMasks {
    pub masks: LearningMasks,
    pub labels: LabelRaster,
}

/// Construct `(m, m_r)` and the effective labels for `scenario`.
///
/// Inputs: the composed tri-state labels `y` (positives are the point
/// expansion), the shrunken background-object mask `O`, the positive-disk
/// mask `D`, and the watershed bundle for scenarios with an objectness term.
pub fn build_masks(
    scenario: &ScenarioConfig,
    y: &LabelRaster,
    background: &BinaryMask,
    disk: &BinaryMask,
    bundle: Option<&ObjectnessBundle>,
) -> Result<ScenarioMasks, MaskError> {
    scenario.validate()?;
    let dim = y.dim();
    if background.dim() != dim || disk.dim() != dim {
        return Err(MaskError::Shape(GridError::ShapeMismatch {
            expected: dim,
            got: if background.dim() != dim {
                background.dim()
            } else {
                disk.dim()
            },
        }));
    }
    let bundle = if scenario.uses_objectness() {
        let b = bundle.ok_or(MaskError::MissingBundle(scenario.name))?;
        if b.o.dim() != dim {
            return Err(MaskError::Shape(GridError::ShapeMismatch {
                expected: dim,
                got: b.o.dim(),
            }));
        }
        Some(b)
    } else {
        None
    };

    let (h, w) = dim;
    let pos = y.mask_of(LabelState::Pos, "pos");

    let result = match scenario.name {
        ScenarioName::Baseline => {
            // No masking: every pixel is supervised. Labels are the 1.5 m
            // disks as positives, negative elsewhere.
            let mut labels = LabelRaster::unknown(h, w);
            for r in 0..h {
                for c in 0..w {
                    labels.set(
                        r,
                        c,
                        if disk.get(r, c) {
                            LabelState::Pos
                        } else {
                            LabelState::Neg
                        },
                    );
                }
            }
            ScenarioMasks {
                masks: LearningMasks {
                    m: BinaryMask::ones(h, w, "m"),
                    m_r: None,
                },
                labels,
            }
        }
        ScenarioName::Obj => {
            // Supervise positives plus the inter-instance boundaries (as
            // negatives); the objectness loss runs over the whole image.
            let b = bundle.expect("validated above");
            let mut labels = LabelRaster::unknown(h, w);
            let mut m = BinaryMask::zeros(h, w, "m");
            for r in 0..h {
                for c in 0..w {
                    if pos.get(r, c) {
                        labels.set(r, c, LabelState::Pos);
                        m.set(r, c, true);
                    } else if b.boundaries.get(r, c) {
                        labels.set(r, c, LabelState::Neg);
                        m.set(r, c, true);
                    }
                }
            }
            ScenarioMasks {
                masks: LearningMasks {
                    m,
                    m_r: Some(BinaryMask::ones(h, w, "m_r")),
                },
                labels,
            }
        }
        ScenarioName::Mask | ScenarioName::MaskObj | ScenarioName::MaskObjThresh => {
            // m = positives ∪ (O \ D); (O \ D) pixels that are not positive
            // are supervised as negative; everything unknown stays masked out.
            let mut labels = LabelRaster::unknown(h, w);
            let mut m = BinaryMask::zeros(h, w, "m");
            for r in 0..h {
                for c in 0..w {
                    if pos.get(r, c) {
                        labels.set(r, c, LabelState::Pos);
                        m.set(r, c, true);
                    } else if background.get(r, c) && !disk.get(r, c) {
                        labels.set(r, c, LabelState::Neg);
                        m.set(r, c, true);
                    }
                }
            }
            let m_r = match scenario.name {
                ScenarioName::Mask => None,
                ScenarioName::MaskObj => Some(disk.clone()),
                ScenarioName::MaskObjThresh => {
                    let b = bundle.expect("validated above");
                    let t = scenario.threshold.expect("validated above");
                    Some(BinaryMask::from_fn(h, w, "m_r", |r, c| {
                        disk.get(r, c) && b.o[[r, c]] >= t
                    }))
                }
                _ => unreachable!(),
            };
            ScenarioMasks {
                masks: LearningMasks { m, m_r },
                labels,
            }
        }
    };
    Ok(result)
}

/// Per-scenario rasters derived from one patch, ready for the loss.
pub fn effective_states(masks: &ScenarioMasks) -> &Array2<u8> {
    masks.labels.states()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectness::{derive_boundaries, ObjectnessBundle};
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn random_inputs(
        rng: &mut ChaCha20Rng,
        h: usize,
        w: usize,
    ) -> (LabelRaster, BinaryMask, BinaryMask, ObjectnessBundle) {
        let tree = BinaryMask::from_fn(h, w, "t", |_, _| rng.gen_bool(0.15));
        let background = BinaryMask::from_fn(h, w, "o", |_, _| rng.gen_bool(0.35));
        let disk = BinaryMask::from_fn(h, w, "d", |_, _| rng.gen_bool(0.2));
        let y = crate::labelgen::compose_label_raster(&tree, &background, &disk).unwrap();
        let regions = Array2::from_shape_fn((h, w), |_| rng.gen_range(1..=3u32));
        let o = Array2::from_shape_fn((h, w), |_| rng.gen::<f64>());
        let delta = o.mapv(|v| 1.0 - v);
        let boundaries = derive_boundaries(&regions);
        let bundle = ObjectnessBundle {
            delta,
            o,
            regions,
            boundaries,
            alpha: 10.0,
        };
        (y, background, disk, bundle)
    }

    #[test]
    fn builtin_rows_validate() {
        for name in ScenarioName::ALL {
            let cfg = ScenarioConfig::builtin(name);
            cfg.validate().unwrap();
            match name {
                ScenarioName::Baseline | ScenarioName::Mask => assert_eq!(cfg.beta, 0.0),
                _ => assert_eq!(cfg.beta, 1.0),
            }
        }
        assert_eq!(
            ScenarioConfig::builtin(ScenarioName::MaskObjThresh).threshold,
            Some(0.2)
        );
    }

    #[test]
    fn baseline_masks_nothing_and_labels_everything() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (y, background, disk, _) = random_inputs(&mut rng, 8, 8);
        let out = build_masks(
            &ScenarioConfig::builtin(ScenarioName::Baseline),
            &y,
            &background,
            &disk,
            None,
        )
        .unwrap();
        assert_eq!(out.masks.m.count_ones(), 64);
        assert!(out.masks.m_r.is_none());
        assert_eq!(out.labels.count(LabelState::Unknown), 0);
        assert_eq!(out.labels.count(LabelState::Pos), disk.count_ones());
    }

    #[test]
    fn mask_scenario_never_selects_unknown() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..50 {
            let (y, background, disk, _) = random_inputs(&mut rng, 16, 16);
            let out = build_masks(
                &ScenarioConfig::builtin(ScenarioName::Mask),
                &y,
                &background,
                &disk,
                None,
            )
            .unwrap();
            for r in 0..16 {
                for c in 0..16 {
                    if out.masks.m.get(r, c) {
                        assert_ne!(out.labels.get(r, c), LabelState::Unknown);
                    }
                    // y UNKNOWN with O=0 must never be selected.
                    if y.get(r, c) == LabelState::Unknown && !background.get(r, c) {
                        assert!(!out.masks.m.get(r, c));
                    }
                }
            }
        }
    }

    #[test]
    fn thresholded_region_mask_restriction_chain() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (y, background, disk, bundle) = random_inputs(&mut rng, 16, 16);
            let maskobj = build_masks(
                &ScenarioConfig::builtin(ScenarioName::MaskObj),
                &y,
                &background,
                &disk,
                Some(&bundle),
            )
            .unwrap();
            let thresh = build_masks(
                &ScenarioConfig::builtin(ScenarioName::MaskObjThresh),
                &y,
                &background,
                &disk,
                Some(&bundle),
            )
            .unwrap();
            let mr_obj = maskobj.masks.m_r.unwrap();
            let mr_thr = thresh.masks.m_r.unwrap();
            for r in 0..16 {
                for c in 0..16 {
                    // maskobjthresh m_r ⊆ maskobj m_r ⊆ D.
                    assert!(!mr_thr.get(r, c) || mr_obj.get(r, c));
                    assert!(!mr_obj.get(r, c) || disk.get(r, c));
                }
            }
        }
    }

    #[test]
    fn thresh_pixel_below_t_is_dropped() {
        let y = LabelRaster::unknown(1, 1);
        let background = BinaryMask::zeros(1, 1, "o");
        let disk = BinaryMask::ones(1, 1, "d");
        let bundle = ObjectnessBundle {
            delta: Array2::zeros((1, 1)),
            o: Array2::from_elem((1, 1), 0.1),
            regions: Array2::from_elem((1, 1), 1),
            boundaries: BinaryMask::zeros(1, 1, "b"),
            alpha: 10.0,
        };
        let out = build_masks(
            &ScenarioConfig::builtin(ScenarioName::MaskObjThresh),
            &y,
            &background,
            &disk,
            Some(&bundle),
        )
        .unwrap();
        assert!(!out.masks.m_r.unwrap().get(0, 0)); // o=0.1 < t=0.2
    }

    #[test]
    fn missing_bundle_is_an_error() {
        let y = LabelRaster::unknown(4, 4);
        let background = BinaryMask::zeros(4, 4, "o");
        let disk = BinaryMask::zeros(4, 4, "d");
        let err = build_masks(
            &ScenarioConfig::builtin(ScenarioName::Obj),
            &y,
            &background,
            &disk,
            None,
        );
        assert!(matches!(err, Err(MaskError::MissingBundle(_))));
    }

    // Brute-force elementwise set expressions for each scenario; the
    // acceptance suite runs the full 1000-raster version.
    #[test]
    fn oracle_equality_on_random_rasters() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (y, background, disk, bundle) = random_inputs(&mut rng, 16, 16);
            for name in ScenarioName::ALL {
                let cfg = ScenarioConfig::builtin(name);
                let out = build_masks(&cfg, &y, &background, &disk, Some(&bundle)).unwrap();
                let (h, w) = y.dim();
                for r in 0..h {
                    for c in 0..w {
                        let pos = y.get(r, c) == LabelState::Pos;
                        let od = background.get(r, c) && !disk.get(r, c);
                        let expected_m = match name {
                            ScenarioName::Baseline => true,
                            ScenarioName::Obj => pos || bundle.boundaries.get(r, c),
                            _ => pos || od,
                        };
                        assert_eq!(out.masks.m.get(r, c), expected_m, "{name} m at ({r},{c})");
                        let expected_mr = match name {
                            ScenarioName::Baseline | ScenarioName::Mask => None,
                            ScenarioName::Obj => Some(true),
                            ScenarioName::MaskObj => Some(disk.get(r, c)),
                            ScenarioName::MaskObjThresh => {
                                Some(disk.get(r, c) && bundle.o[[r, c]] >= 0.2)
                            }
                        };
                        match (out.masks.m_r.as_ref(), expected_mr) {
                            (None, None) => {}
                            (Some(mr), Some(e)) => {
                                assert_eq!(mr.get(r, c), e, "{name} m_r at ({r},{c})")
                            }
                            other => panic!("{name}: m_r presence mismatch {other:?}"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn construction_is_pure() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (y, background, disk, bundle) = random_inputs(&mut rng, 16, 16);
        for name in ScenarioName::ALL {
            let cfg = ScenarioConfig::builtin(name);
            let a = build_masks(&cfg, &y, &background, &disk, Some(&bundle)).unwrap();
            let b = build_masks(&cfg, &y, &background, &disk, Some(&bundle)).unwrap();
            assert_eq!(a.masks.m, b.masks.m);
            assert_eq!(a.masks.m_r, b.masks.m_r);
            assert_eq!(a.labels, b.labels);
        }
    }
}
