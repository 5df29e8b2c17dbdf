//! Evaluation harness. Three jobs: measure the true downstream impact
//! of one frame's quantizer by re-encoding with it nudged and reading
//! the group distortion delta; sweep that measurement against each
//! model's prediction; and compare rate-distortion curves of the
//! scaled encoders against the unscaled one.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::codec::{encode_planned, build_sequence_plan, CodecConfig, EncodeReport};
use crate::csv::Cell;
use crate::lambda::{build_lambda_maps_mbtree, build_lambda_maps_tpl, LambdaMap};
use crate::mbtree::{beta_mb_frame, mbtree_pass, MbVariant};
use crate::media::Sequence;
use crate::tpl::analyze_sequence;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Baseline,
    Tpl,
    MbTree,
    MbTreeQuant,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Tpl => "tpl",
            ModelKind::MbTree => "mbtree",
            ModelKind::MbTreeQuant => "mbtree-quant",
        }
    }
}

/// Ground-truth reading of dependency strength. Two encodes of the
/// same two-group prefix differ only in the quantizer of the probe
/// frame, the first coded member of the second group; everything the
/// probe feeds is in that group, so the group's distortion delta over
/// the probe's own delta isolates the propagated share.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaObservation {
    pub qstep: f64,
    pub perturb_ratio: f64,
    pub group_sse_base: f64,
    pub group_sse_perturbed: f64,
    pub probe_sse_base: f64,
    pub probe_sse_perturbed: f64,
    /// (group delta / probe delta) - 1: propagated distortion relative
    /// to the distortion change that caused it.
    pub beta_obs: f64,
}

fn two_group_prefix(seq: &Sequence, cfg: &CodecConfig) -> Result<(Sequence, usize)> {
    let needed = 1 + 2 * cfg.gop_length;
    if seq.frames.len() < needed {
        return Err(Error::Config(format!(
            "observation needs {} frames (two groups), sequence has {}",
            needed,
            seq.frames.len()
        )));
    }
    Ok((seq.prefix(needed), 2 * cfg.gop_length))
}

/// Runs the probe experiment. Returns the observation plus both
/// encode reports (base first) for callers that want to inspect them.
pub fn observe_beta(
    seq: &Sequence,
    cfg: &CodecConfig,
    perturb_ratio: f64,
) -> Result<(BetaObservation, EncodeReport, EncodeReport)> {
    if !(perturb_ratio.is_finite() && perturb_ratio > 0.0) {
        return Err(Error::Config(format!("perturbation ratio {perturb_ratio} must be positive")));
    }
    let (prefix, probe) = two_group_prefix(seq, cfg)?;
    let plan = build_sequence_plan(prefix.frames.len(), cfg)?;
    let base = encode_planned(&prefix, cfg, &plan, None)?;
    let mut perturbed_plan = plan.clone();
    perturbed_plan.by_display_mut(probe).qstep *= perturb_ratio;
    let perturbed = encode_planned(&prefix, cfg, &perturbed_plan, None)?;

    let group_sse = |r: &EncodeReport| -> f64 {
        r.frames[cfg.gop_length + 1..=probe].iter().map(|f| f.sse as f64).sum()
    };
    let group_sse_base = group_sse(&base);
    let group_sse_perturbed = group_sse(&perturbed);
    let probe_sse_base = base.frames[probe].sse as f64;
    let probe_sse_perturbed = perturbed.frames[probe].sse as f64;
    let probe_delta = probe_sse_perturbed - probe_sse_base;
    if probe_delta.abs() < 1e-9 {
        return Err(Error::DegenerateObservation(probe_delta));
    }
    let beta_obs = (group_sse_perturbed - group_sse_base) / probe_delta - 1.0;
    Ok((
        BetaObservation {
            qstep: cfg.base_qstep,
            perturb_ratio,
            group_sse_base,
            group_sse_perturbed,
            probe_sse_base,
            probe_sse_perturbed,
            beta_obs,
        },
        base,
        perturbed,
    ))
}

/// Model predictions for the probe frame of the same experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelBetas {
    pub beta_tpl: f64,
    pub beta_mb: f64,
    pub beta_mbq: f64,
}

pub fn estimate_betas(seq: &Sequence, cfg: &CodecConfig) -> Result<ModelBetas> {
    let (prefix, probe) = two_group_prefix(seq, cfg)?;
    let analysis = analyze_sequence(&prefix, cfg)?;
    let beta_tpl = analysis.groups[1].beta_frame(&analysis.flow, probe)?;
    let mb = mbtree_pass(&prefix, &analysis.plan, cfg, &analysis.flow)?;
    let blocks = &mb.frames[probe].blocks;
    let beta_mb = beta_mb_frame(mb.canonical_costs(&analysis.plan, probe, MbVariant::Plain), blocks)?;
    let beta_mbq =
        beta_mb_frame(mb.canonical_costs(&analysis.plan, probe, MbVariant::Quant), blocks)?;
    Ok(ModelBetas { beta_tpl, beta_mb, beta_mbq })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccuracyRow {
    pub qstep: f64,
    pub beta_obs: f64,
    pub beta_tpl: f64,
    pub beta_mb: f64,
    pub beta_mbq: f64,
}

/// Observation and all three predictions across a quantizer sweep.
pub fn accuracy_sweep(
    seq: &Sequence,
    cfg: &CodecConfig,
    qsteps: &[f64],
    perturb_ratio: f64,
) -> Result<Vec<AccuracyRow>> {
    let mut rows = Vec::with_capacity(qsteps.len());
    for &q in qsteps {
        let mut cfg_q = cfg.clone();
        cfg_q.base_qstep = q;
        let (obs, _, _) = observe_beta(seq, &cfg_q, perturb_ratio)?;
        let est = estimate_betas(seq, &cfg_q)?;
        rows.push(AccuracyRow {
            qstep: q,
            beta_obs: obs.beta_obs,
            beta_tpl: est.beta_tpl,
            beta_mb: est.beta_mb,
            beta_mbq: est.beta_mbq,
        });
    }
    Ok(rows)
}

pub const ACCURACY_HEADER: [&str; 5] = ["qstep", "beta_obs", "beta_tpl", "beta_mb", "beta_mbq"];

pub fn accuracy_rows(rows: &[AccuracyRow]) -> Vec<Vec<Cell>> {
    rows.iter()
        .map(|r| {
            vec![
                Cell::from(r.qstep),
                Cell::from(r.beta_obs),
                Cell::from(r.beta_tpl),
                Cell::from(r.beta_mb),
                Cell::from(r.beta_mbq),
            ]
        })
        .collect()
}

pub const OBSERVE_HEADER: [&str; 7] = [
    "qstep",
    "perturb_ratio",
    "group_sse_base",
    "group_sse_perturbed",
    "probe_sse_base",
    "probe_sse_perturbed",
    "beta_obs",
];

pub fn observe_row(obs: &BetaObservation) -> Vec<Cell> {
    vec![
        Cell::from(obs.qstep),
        Cell::from(obs.perturb_ratio),
        Cell::from(obs.group_sse_base),
        Cell::from(obs.group_sse_perturbed),
        Cell::from(obs.probe_sse_base),
        Cell::from(obs.probe_sse_perturbed),
        Cell::from(obs.beta_obs),
    ]
}

/// Encodes with a model's multiplier maps applied, or unscaled for
/// the baseline.
pub fn encode_with_model(
    seq: &Sequence,
    cfg: &CodecConfig,
    model: ModelKind,
) -> Result<EncodeReport> {
    let maps: Option<BTreeMap<usize, LambdaMap>> = match model {
        ModelKind::Baseline => None,
        ModelKind::Tpl => {
            let analysis = analyze_sequence(seq, cfg)?;
            Some(build_lambda_maps_tpl(&analysis, cfg)?)
        }
        ModelKind::MbTree | ModelKind::MbTreeQuant => {
            let analysis = analyze_sequence(seq, cfg)?;
            let mb = mbtree_pass(seq, &analysis.plan, cfg, &analysis.flow)?;
            let variant = if model == ModelKind::MbTree {
                MbVariant::Plain
            } else {
                MbVariant::Quant
            };
            Some(build_lambda_maps_mbtree(&mb, &analysis.plan, cfg, variant)?)
        }
    };
    let plan = build_sequence_plan(seq.frames.len(), cfg)?;
    encode_planned(seq, cfg, &plan, maps.as_ref())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    pub qstep: f64,
    pub kbps: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCurve {
    pub model: ModelKind,
    pub points: Vec<RdPoint>,
    /// Total wall-clock time spent producing the curve, model passes
    /// included.
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelBd {
    pub model: ModelKind,
    pub bd_rate_percent: f64,
    pub runtime_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub curves: Vec<ModelCurve>,
    pub bd: Vec<ModelBd>,
}

/// Encodes the sequence at each quantizer with the baseline and both
/// dependency-scaled encoders, then summarizes each scaled curve as an
/// average rate delta against the baseline.
pub fn compare_encoders(
    seq: &Sequence,
    cfg: &CodecConfig,
    qsteps: &[f64],
) -> Result<ComparisonReport> {
    let models = [ModelKind::Baseline, ModelKind::Tpl, ModelKind::MbTreeQuant];
    let mut curves: Vec<ModelCurve> = models
        .iter()
        .map(|&model| ModelCurve { model, points: Vec::new(), seconds: 0.0 })
        .collect();
    for &q in qsteps {
        let mut cfg_q = cfg.clone();
        cfg_q.base_qstep = q;
        for curve in curves.iter_mut() {
            let start = Instant::now();
            let report = encode_with_model(seq, &cfg_q, curve.model)?;
            curve.seconds += start.elapsed().as_secs_f64();
            curve.points.push(RdPoint {
                qstep: q,
                kbps: report.kbps(seq.frame_rate),
                psnr: report.sequence_psnr(),
            });
        }
    }
    let base_seconds = curves[0].seconds;
    let base_points = curves[0].points.clone();
    let bd = curves[1..]
        .iter()
        .map(|c| {
            Ok(ModelBd {
                model: c.model,
                bd_rate_percent: bd_rate(&base_points, &c.points)?,
                runtime_ratio: if base_seconds > 0.0 { c.seconds / base_seconds } else { 1.0 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { curves, bd })
}

/// Points sorted by quality, checked monotone and usable for fitting.
fn checked_curve(points: &[RdPoint], name: &str) -> Result<Vec<RdPoint>> {
    if points.len() < 4 {
        return Err(Error::Curve(format!(
            "{name} curve has {} points, need at least 4",
            points.len()
        )));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.psnr.total_cmp(&b.psnr));
    for p in &sorted {
        if !(p.kbps.is_finite() && p.kbps > 0.0 && p.psnr.is_finite()) {
            return Err(Error::Curve(format!("{name} curve has a non-positive or non-finite point")));
        }
    }
    for w in sorted.windows(2) {
        if w[1].psnr <= w[0].psnr || w[1].kbps <= w[0].kbps {
            return Err(Error::Curve(format!(
                "{name} curve is not strictly increasing in quality and rate"
            )));
        }
    }
    Ok(sorted)
}

/// Cubic least-squares fit of log10(rate) as a function of quality,
/// in coordinates centered on the curve's mean quality.
fn fit_log_rate(points: &[RdPoint]) -> Result<(f64, [f64; 4])> {
    let center = points.iter().map(|p| p.psnr).sum::<f64>() / points.len() as f64;
    let mut ata = [[0.0f64; 4]; 4];
    let mut aty = [0.0f64; 4];
    for p in points {
        let x = p.psnr - center;
        let y = p.kbps.log10();
        let basis = [1.0, x, x * x, x * x * x];
        for i in 0..4 {
            for j in 0..4 {
                ata[i][j] += basis[i] * basis[j];
            }
            aty[i] += basis[i] * y;
        }
    }
    // Gaussian elimination with partial pivoting.
    let mut m = [[0.0f64; 5]; 4];
    for i in 0..4 {
        m[i][..4].copy_from_slice(&ata[i]);
        m[i][4] = aty[i];
    }
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col].abs() < 1e-12 {
            return Err(Error::Curve("degenerate fit: quality points too close".into()));
        }
        m.swap(col, pivot);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..5 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut coeffs = [0.0f64; 4];
    for i in (0..4).rev() {
        let mut v = m[i][4];
        for j in i + 1..4 {
            v -= m[i][j] * coeffs[j];
        }
        coeffs[i] = v / m[i][i];
    }
    Ok((center, coeffs))
}

fn integrate_poly(center: f64, coeffs: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let anti = |x: f64| {
        let t = x - center;
        coeffs[0] * t + coeffs[1] * t * t / 2.0 + coeffs[2] * t * t * t / 3.0
            + coeffs[3] * t * t * t * t / 4.0
    };
    anti(hi) - anti(lo)
}

/// Average rate difference of `test` against `reference` over their
/// shared quality range, in percent. Negative means `test` needs
/// fewer bits for the same quality.
pub fn bd_rate(reference: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    let r = checked_curve(reference, "reference")?;
    let t = checked_curve(test, "test")?;
    let lo = r[0].psnr.max(t[0].psnr);
    let hi = r[r.len() - 1].psnr.min(t[t.len() - 1].psnr);
    if hi <= lo {
        return Err(Error::Curve(format!(
            "curves share no quality range ({lo:.3} .. {hi:.3})"
        )));
    }
    let (rc, rcoef) = fit_log_rate(&r)?;
    let (tc, tcoef) = fit_log_rate(&t)?;
    let avg_diff =
        (integrate_poly(tc, &tcoef, lo, hi) - integrate_poly(rc, &rcoef, lo, hi)) / (hi - lo);
    Ok(100.0 * (10f64.powf(avg_diff) - 1.0))
}

pub const RD_HEADER: [&str; 4] = ["model", "qstep", "kbps", "psnr"];

pub fn rd_rows(report: &ComparisonReport) -> Vec<Vec<Cell>> {
    let mut rows = Vec::new();
    for curve in &report.curves {
        for p in &curve.points {
            rows.push(vec![
                Cell::from(curve.model.label()),
                Cell::from(p.qstep),
                Cell::from(p.kbps),
                Cell::from(p.psnr),
            ]);
        }
    }
    rows
}

pub const BD_HEADER: [&str; 3] = ["model", "bd_rate_percent", "runtime_ratio"];

pub fn bd_rows(report: &ComparisonReport) -> Vec<Vec<Cell>> {
    report
        .bd
        .iter()
        .map(|b| {
            vec![
                Cell::from(b.model.label()),
                Cell::from(b.bd_rate_percent),
                Cell::from(b.runtime_ratio),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{synth_sequence, SynthKind};
    use approx::assert_abs_diff_eq;

    fn curve(points: &[(f64, f64)]) -> Vec<RdPoint> {
        points.iter().map(|&(kbps, psnr)| RdPoint { qstep: 0.0, kbps, psnr }).collect()
    }

    fn sample_curve() -> Vec<RdPoint> {
        curve(&[(120.0, 31.2), (260.0, 34.8), (540.0, 38.1), (1150.0, 41.5)])
    }

    #[test]
    fn identical_curves_have_zero_rate_delta() {
        let a = sample_curve();
        assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn uniform_rate_inflation_is_recovered_exactly() {
        let a = sample_curve();
        let b: Vec<RdPoint> =
            a.iter().map(|p| RdPoint { kbps: p.kbps * 1.1, ..*p }).collect();
        assert_abs_diff_eq!(bd_rate(&a, &b).unwrap(), 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(
            bd_rate(&b, &a).unwrap(),
            100.0 * (1.0 / 1.1 - 1.0),
            epsilon = 1e-6
        );
    }

    #[test]
    fn five_point_curves_fit_by_least_squares() {
        let a = curve(&[
            (120.0, 31.2),
            (260.0, 34.8),
            (540.0, 38.1),
            (1150.0, 41.5),
            (2400.0, 44.6),
        ]);
        let b: Vec<RdPoint> =
            a.iter().map(|p| RdPoint { kbps: p.kbps * 1.1, ..*p }).collect();
        assert_abs_diff_eq!(bd_rate(&a, &b).unwrap(), 10.0, epsilon = 1e-6);
    }

    #[test]
    fn malformed_curves_are_rejected() {
        let a = sample_curve();
        let short = curve(&[(120.0, 31.2), (260.0, 34.8), (540.0, 38.1)]);
        assert!(matches!(bd_rate(&short, &a), Err(Error::Curve(_))));

        let mut bent = sample_curve();
        bent[2].kbps = 100.0;
        assert!(matches!(bd_rate(&a, &bent), Err(Error::Curve(_))));

        let disjoint = curve(&[(120.0, 51.2), (260.0, 54.8), (540.0, 58.1), (1150.0, 61.5)]);
        assert!(matches!(bd_rate(&a, &disjoint), Err(Error::Curve(_))));
    }

    fn small_cfg(qstep: f64) -> CodecConfig {
        let mut cfg = CodecConfig::new(qstep);
        cfg.gop_length = 4;
        cfg
    }

    #[test]
    fn observation_only_disturbs_the_second_group() {
        let seq =
            synth_sequence(SynthKind::NoisyShift { dx: 1, dy: 1, amplitude: 5 }, 64, 48, 9, 2)
                .unwrap();
        let cfg = small_cfg(24.0);
        let (obs, base, perturbed) = observe_beta(&seq, &cfg, 1.1).unwrap();
        for d in 0..=cfg.gop_length {
            assert_eq!(base.frames[d].rate_bits, perturbed.frames[d].rate_bits);
            assert_eq!(base.frames[d].sse, perturbed.frames[d].sse);
        }
        assert!(obs.probe_sse_perturbed > obs.probe_sse_base);
        assert!(obs.beta_obs.is_finite());
    }

    #[test]
    fn unperturbed_observation_is_degenerate() {
        let seq =
            synth_sequence(SynthKind::NoisyShift { dx: 1, dy: 1, amplitude: 5 }, 48, 48, 9, 2)
                .unwrap();
        assert!(matches!(
            observe_beta(&seq, &small_cfg(24.0), 1.0),
            Err(Error::DegenerateObservation(_))
        ));
    }

    #[test]
    fn short_sequences_are_refused() {
        let seq = synth_sequence(SynthKind::Static, 48, 48, 5, 0).unwrap();
        assert!(matches!(observe_beta(&seq, &small_cfg(24.0), 1.1), Err(Error::Config(_))));
        assert!(matches!(estimate_betas(&seq, &small_cfg(24.0)), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_produces_one_row_per_qstep() {
        let seq =
            synth_sequence(SynthKind::NoisyShift { dx: 1, dy: 0, amplitude: 4 }, 48, 48, 9, 5)
                .unwrap();
        let rows = accuracy_sweep(&seq, &small_cfg(0.0), &[20.0, 36.0], 1.1).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.beta_tpl >= 0.0 && r.beta_mb >= 0.0 && r.beta_mbq >= 0.0);
            assert!(r.beta_mbq <= r.beta_mb + 1e-12);
        }
        assert_eq!(accuracy_rows(&rows).len(), 2);
    }

    #[test]
    fn comparison_builds_full_curves_and_deltas() {
        let seq =
            synth_sequence(SynthKind::NoisyShift { dx: 1, dy: 1, amplitude: 5 }, 48, 48, 9, 7)
                .unwrap();
        let report = compare_encoders(&seq, &small_cfg(0.0), &[8.0, 16.0, 32.0, 56.0]).unwrap();
        assert_eq!(report.curves.len(), 3);
        assert!(report.curves.iter().all(|c| c.points.len() == 4));
        assert_eq!(report.bd.len(), 2);
        for b in &report.bd {
            assert!(b.bd_rate_percent.is_finite());
            assert!(b.runtime_ratio > 0.0);
        }
        assert_eq!(rd_rows(&report).len(), 12);
        assert_eq!(bd_rows(&report).len(), 2);
    }
}
