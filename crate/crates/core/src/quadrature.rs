//! Adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands.
//!
//! The interval is first cut at caller-supplied breakpoints (carrier
//! half-periods, spline knots), then every panel is bisected until its error
//! estimate falls below its share of the global tolerance.

#![allow(clippy::excessive_precision)]

use crate::exec::{CompensatedSum, Exec};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const PANELS_PER_TASK: usize = 2048;

/// A vector-valued integrand.
///
/// `nodes` may be overridden when the 15 Kronrod nodes of a panel can be
/// evaluated more cheaply together than one at a time.
pub trait Integrand<const N: usize>: Sync {
    fn eval(&self, t: f64) -> [f64; N];

    /// Values at `center - half·x_k` (k = 0..7), `center`, `center + half·x_k`
    /// (k = 6..0), where `x_k` are [`kronrod_nodes`].
    fn nodes(&self, center: f64, half: f64) -> [[f64; N]; 15] {
        std::array::from_fn(|k| match k {
            0..=6 => self.eval(center - half * XGK[k]),
            7 => self.eval(center),
            _ => self.eval(center + half * XGK[14 - k]),
        })
    }
}

impl<const N: usize, F> Integrand<N> for F
where
    F: Fn(f64) -> [f64; N] + Sync,
{
    fn eval(&self, t: f64) -> [f64; N] {
        self(t)
    }
}

/// Positive Kronrod abscissae on `[-1, 1]`, largest first.
pub fn kronrod_nodes() -> [f64; 7] {
    std::array::from_fn(|k| XGK[k])
}

/// One G7/K15 panel estimate.
#[derive(Debug, Clone, Copy)]
pub struct PanelEstimate<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub abs_value: [f64; N],
}

/// Applies the 15-point Kronrod rule and its embedded 7-point Gauss rule on `[a, b]`.
pub fn gk15<const N: usize, F>(f: &F, a: f64, b: f64) -> PanelEstimate<N>
where
    F: Integrand<N> + ?Sized,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fv = f.nodes(center, half);
    let mut resk = [0.0; N];
    let mut resg = [0.0; N];
    let mut resabs = [0.0; N];
    for n in 0..N {
        resk[n] = WGK[7] * fv[7][n];
        resg[n] = WG[3] * fv[7][n];
        resabs[n] = resk[n].abs();
    }
    for k in 0..7 {
        let (lo, hi) = (&fv[k], &fv[14 - k]);
        for n in 0..N {
            let pair = lo[n] + hi[n];
            resk[n] += WGK[k] * pair;
            resabs[n] += WGK[k] * (lo[n].abs() + hi[n].abs());
            if k % 2 == 1 {
                resg[n] += WG[k / 2] * pair;
            }
        }
    }
    let mut resasc = [0.0; N];
    for n in 0..N {
        resasc[n] = WGK[7] * (fv[7][n] - 0.5 * resk[n]).abs();
    }
    for k in 0..7 {
        let (lo, hi) = (&fv[k], &fv[14 - k]);
        for n in 0..N {
            let mean = 0.5 * resk[n];
            resasc[n] += WGK[k] * ((lo[n] - mean).abs() + (hi[n] - mean).abs());
        }
    }
    let h = half.abs();
    let value: [f64; N] = std::array::from_fn(|n| resk[n] * half);
    let abs_value: [f64; N] = std::array::from_fn(|n| resabs[n] * h);
    let error: [f64; N] =
        std::array::from_fn(|n| rescale_error((resk[n] - resg[n]).abs() * h, resabs[n] * h, resasc[n] * h));
    PanelEstimate {
        value,
        error,
        abs_value,
    }
}

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut e = err;
    if resasc != 0.0 && e != 0.0 {
        e = resasc * (200.0 * e / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * resabs);
    }
    e
}

/// Failure to reach the requested tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureFailure {
    /// Component with the largest error relative to its tolerance.
    pub component: usize,
    pub estimated_error: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct QuadratureOutcome<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            rel_tol: 1e-10,
            max_depth: 24,
        }
    }
}

/// Integrates `f` over `[breaks[0], breaks[last]]`.
///
/// `scale` maps integrals of `|f_n|` to the magnitude against which each
/// component's relative tolerance is measured. A strided pre-pass supplies a
/// provisional scale; if the final magnitudes demand a tighter tolerance
/// than the one used and the error budget is exceeded, the pass is repeated.
pub fn integrate_adaptive<const N: usize, F, S>(
    f: &F,
    breaks: &[f64],
    scale: S,
    opts: AdaptiveOptions,
    exec: Exec,
) -> Result<QuadratureOutcome<N>, QuadratureFailure>
where
    F: Integrand<N> + ?Sized,
    S: Fn(&[f64; N]) -> [f64; N],
{
    assert!(breaks.len() >= 2, "need at least one panel");
    let total = breaks[breaks.len() - 1] - breaks[0];
    let panels: Vec<(f64, f64)> = breaks.windows(2).map(|w| (w[0], w[1])).collect();

    let stride = (panels.len() / PRESAMPLE_PANELS).max(1);
    let mut sampled_abs = [0.0; N];
    let mut sampled_len = 0.0;
    for &(a, b) in panels.iter().step_by(stride) {
        let est = gk15(f, a, b);
        for n in 0..N {
            sampled_abs[n] += est.abs_value[n];
        }
        sampled_len += b - a;
    }
    let provisional: [f64; N] = std::array::from_fn(|n| sampled_abs[n] * total / sampled_len);
    let mut tol = tolerances(&scale(&provisional), opts.rel_tol);

    loop {
        let pass = single_pass(f, &panels, &tol, total, opts.max_depth, exec);
        let final_tol = tolerances(&scale(&pass.abs_value), opts.rel_tol);
        let over = (0..N).find(|&n| pass.error[n] > final_tol[n]);
        let looser = (0..N).any(|n| final_tol[n] < tol[n]);
        match (over, pass.failure) {
            (Some(_), _) if looser => {
                tol = std::array::from_fn(|n| tol[n].min(final_tol[n]));
                continue;
            }
            (None, None) => {
                return Ok(QuadratureOutcome {
                    value: pass.value,
                    error: pass.error,
                })
            }
            (over, failure) => {
                let mut worst = failure;
                if let Some(n) = over {
                    worst = Some(worse(
                        worst,
                        QuadratureFailure {
                            component: n,
                            estimated_error: pass.error[n],
                            tolerance: final_tol[n],
                        },
                    ));
                }
                return Err(worst.expect("some failure"));
            }
        }
    }
}

const PRESAMPLE_PANELS: usize = 4096;

fn tolerances<const N: usize>(scales: &[f64; N], rel_tol: f64) -> [f64; N] {
    std::array::from_fn(|n| rel_tol * scales[n])
}

struct PassTotals<const N: usize> {
    value: [f64; N],
    error: [f64; N],
    abs_value: [f64; N],
    failure: Option<QuadratureFailure>,
}

fn single_pass<const N: usize, F>(
    f: &F,
    panels: &[(f64, f64)],
    tol: &[f64; N],
    total: f64,
    max_depth: u32,
    exec: Exec,
) -> PassTotals<N>
where
    F: Integrand<N> + ?Sized,
{
    let chunks: Vec<&[(f64, f64)]> = panels.chunks(PANELS_PER_TASK).collect();
    let per_chunk = exec.map(&chunks, |chunk| {
        let mut out = Vec::new();
        let mut failure = None;
        let mut value = [CompensatedSum::default(); N];
        let mut error = [0.0; N];
        let mut abs_value = [0.0; N];
        for &(a, b) in chunk.iter() {
            out.clear();
            let est = gk15(f, a, b);
            refine(f, a, b, est, tol, total, 0, max_depth, &mut out, &mut failure);
            for piece in &out {
                for n in 0..N {
                    value[n].add(piece.value[n]);
                    error[n] += piece.error[n];
                    abs_value[n] += piece.abs_value[n];
                }
            }
        }
        (value.map(|v| v.value()), error, abs_value, failure)
    });
    let mut value = [CompensatedSum::default(); N];
    let mut error = [0.0; N];
    let mut abs_value = [0.0; N];
    let mut worst: Option<QuadratureFailure> = None;
    for (v, e, a, fl) in per_chunk {
        for n in 0..N {
            value[n].add(v[n]);
            error[n] += e[n];
            abs_value[n] += a[n];
        }
        if let Some(fl) = fl {
            worst = Some(worse(worst, fl));
        }
    }
    PassTotals {
        value: value.map(|v| v.value()),
        error,
        abs_value,
        failure: worst,
    }
}

fn worse(a: Option<QuadratureFailure>, b: QuadratureFailure) -> QuadratureFailure {
    match a {
        Some(a) if a.estimated_error / a.tolerance >= b.estimated_error / b.tolerance => a,
        _ => b,
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<const N: usize, F>(
    f: &F,
    a: f64,
    b: f64,
    est: PanelEstimate<N>,
    tol: &[f64; N],
    total: f64,
    depth: u32,
    max_depth: u32,
    out: &mut Vec<PanelEstimate<N>>,
    failure: &mut Option<QuadratureFailure>,
) where
    F: Integrand<N> + ?Sized,
{
    let share = (b - a) / total;
    let mut worst_ratio = 0.0;
    let mut worst_n = 0;
    for n in 0..N {
        let local = tol[n] * share;
        let ratio = if local > 0.0 {
            est.error[n] / local
        } else if est.error[n] > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_n = n;
        }
    }
    if worst_ratio <= 1.0 {
        out.push(est);
        return;
    }
    if depth >= max_depth {
        let fl = QuadratureFailure {
            component: worst_n,
            estimated_error: est.error[worst_n],
            tolerance: tol[worst_n] * share,
        };
        *failure = Some(worse(*failure, fl));
        out.push(est);
        return;
    }
    let mid = 0.5 * (a + b);
    let left = gk15(f, a, mid);
    let right = gk15(f, mid, b);
    refine(f, a, mid, left, tol, total, depth + 1, max_depth, out, failure);
    refine(f, mid, b, right, tol, total, depth + 1, max_depth, out, failure);
}
