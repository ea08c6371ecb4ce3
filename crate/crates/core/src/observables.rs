//! Measurements on a spinor field: position distribution, peaks, the two-branch
//! ("cat") decomposition, component proportionality, spin expectations,
//! alignment with the effective field and branch phase tracking.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{Matrix3, Matrix4, Vector3};
use num_complex::Complex64;

use crate::config::{DEFAULT_MERGE_WIDTH, DEFAULT_PEAK_THRESHOLD};
use crate::error::ObservableError;
use crate::field::{Component, SpinPair, SpinorField};
use crate::grid::SpatialGrid;
use crate::schedule::{effective_field, Drive};

/// `P(z) = sum over the four components of |u(z)|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionDistribution {
    grid: Arc<SpatialGrid>,
    values: Vec<f64>,
    total_mass: f64,
}

impl PositionDistribution {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn mean(&self) -> f64 {
        if self.total_mass == 0.0 {
            return 0.0;
        }
        let first: f64 = self.values.iter().zip(self.grid.positions()).map(|(p, z)| p * z).sum();
        first * self.grid.dz() / self.total_mass
    }

    /// `sum_j |P_j - Q_j| dz`.
    pub fn l1_distance(&self, other: &PositionDistribution) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.dz()
    }
}

pub fn position_distribution(f: &SpinorField) -> PositionDistribution {
    let n = f.grid().len();
    let mut values = vec![0.0; n];
    for c in f.components() {
        for (p, v) in values.iter_mut().zip(c) {
            *p += v.norm_sqr();
        }
    }
    let total_mass = values.iter().sum::<f64>() * f.grid().dz();
    PositionDistribution {
        grid: f.grid_arc().clone(),
        values,
        total_mass,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSettings {
    /// Minimum peak height relative to `max(P)`.
    pub threshold: f64,
    /// Maxima closer than this (in z) are merged into the higher one.
    pub merge_width: f64,
}

impl Default for PeakSettings {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_PEAK_THRESHOLD,
            merge_width: DEFAULT_MERGE_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    /// Grid position of the maximum.
    pub position: f64,
    pub height: f64,
    /// Probability in the peak's watershed region.
    pub mass: f64,
    /// Mean z over the watershed region.
    pub centroid: f64,
    /// Inclusive index range of the watershed region.
    pub region: (usize, usize),
    /// Fraction of the region's mass with the remote spin up, once labelled
    /// with [`label_peaks`].
    pub remote_up: Option<f64>,
}

/// Local maxima of `P` above `threshold * max(P)`, merged within
/// `merge_width`, with masses from a watershed split at the minimum of `P`
/// between neighbouring peaks. Sorted by position.
pub fn find_peaks(p: &PositionDistribution, settings: PeakSettings) -> Vec<Peak> {
    let v = &p.values;
    let n = v.len();
    let max = v.iter().copied().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let floor = settings.threshold * max;
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&j| {
            let left = if j > 0 { v[j - 1] } else { f64::NEG_INFINITY };
            let right = if j + 1 < n { v[j + 1] } else { f64::NEG_INFINITY };
            v[j] >= floor && v[j] > left && v[j] >= right
        })
        .collect();
    candidates.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let z = p.grid.positions();
    let mut kept: Vec<usize> = Vec::new();
    for j in candidates {
        if kept.iter().all(|&k| (z[k] - z[j]).abs() >= settings.merge_width) {
            kept.push(j);
        }
    }
    kept.sort_unstable();

    let mut bounds = Vec::with_capacity(kept.len() + 1);
    bounds.push(0usize);
    for w in kept.windows(2) {
        bounds.push(argmin(v, w[0], w[1]) + 1);
    }
    bounds.push(n);
    let dz = p.grid.dz();
    kept.iter()
        .enumerate()
        .map(|(k, &j)| {
            let (lo, hi) = (bounds[k], bounds[k + 1] - 1);
            let (mass, first) = (lo..=hi).fold((0.0, 0.0), |(m, f), i| (m + v[i], f + v[i] * z[i]));
            Peak {
                position: z[j],
                height: v[j],
                mass: mass * dz,
                centroid: if mass > 0.0 { first / mass } else { z[j] },
                region: (lo, hi),
                remote_up: None,
            }
        })
        .collect()
}

/// Fills in [`Peak::remote_up`] for each peak from the field it came from.
pub fn label_peaks(f: &SpinorField, peaks: &mut [Peak]) {
    for peak in peaks {
        let (lo, hi) = peak.region;
        let m = region_pair_masses(f, lo, hi);
        let total = m.0 + m.1;
        peak.remote_up = (total > 0.0).then(|| m.0 / total);
    }
}

fn argmin(v: &[f64], from: usize, to: usize) -> usize {
    (from..=to).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(from)
}

fn region_pair_masses(f: &SpinorField, lo: usize, hi: usize) -> (f64, f64) {
    let mass = |p: SpinPair| {
        let (a, b) = p.components();
        f[a][lo..=hi]
            .iter()
            .chain(&f[b][lo..=hi])
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            * f.grid().dz()
    };
    (mass(SpinPair::RemoteUp), mass(SpinPair::RemoteDown))
}

/// Measurements restricted to one spatial branch of the field.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub mass: f64,
    pub centroid: f64,
    /// Probability that the remote spin is up, given this branch.
    pub remote_up: f64,
    /// Conditional `<S1>` (components of `sigma/2`; length 1/2 for a pure
    /// first-spin state).
    pub spin1: [f64; 3],
    /// `1 - largest Schmidt weight` between the cantilever and the two spins;
    /// zero for an exact product state.
    pub product_residual: f64,
}

/// Left (`a`) and right (`b`) branches split at the minimum of `P` between
/// the two peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct CatDecomposition {
    pub split_point: f64,
    pub a: Branch,
    pub b: Branch,
}

pub fn decompose_cat(f: &SpinorField, peaks: &[Peak]) -> Result<CatDecomposition, ObservableError> {
    let [left, right] = peaks else {
        return Err(ObservableError::DecompositionUnavailable(peaks.len()));
    };
    let p = position_distribution(f);
    let jl = f.grid().index_of(left.position);
    let jr = f.grid().index_of(right.position);
    let split = argmin(p.values(), jl.min(jr), jl.max(jr));
    let n = f.grid().len();
    Ok(CatDecomposition {
        split_point: f.grid().positions()[split],
        a: branch(f, &p, 0, split),
        b: branch(f, &p, split + 1, n - 1),
    })
}

fn branch(f: &SpinorField, p: &PositionDistribution, lo: usize, hi: usize) -> Branch {
    let dz = f.grid().dz();
    let z = f.grid().positions();
    let v = p.values();
    let (mass_sum, first) = (lo..=hi).fold((0.0, 0.0), |(m, s), i| (m + v[i], s + v[i] * z[i]));
    let mass = mass_sum * dz;
    let (up, _) = region_pair_masses(f, lo, hi);

    // 4x4 spin density matrix of the branch, traced over z
    let mut rho = Matrix4::<Complex64>::zeros();
    for (r, cr) in Component::ALL.iter().enumerate() {
        for (c, cc) in Component::ALL.iter().enumerate().skip(r) {
            let s: Complex64 = f[*cr][lo..=hi]
                .iter()
                .zip(&f[*cc][lo..=hi])
                .map(|(a, b)| a * b.conj())
                .sum::<Complex64>()
                * dz;
            rho[(r, c)] = s;
            rho[(c, r)] = s.conj();
        }
    }
    let spin1 = spin1_from_rho(&rho);
    let lambda_max = if mass > 0.0 {
        rho.symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        0.0
    };
    let (remote_up, spin1, residual) = if mass > 0.0 {
        (
            (up / mass).clamp(0.0, 1.0),
            spin1.map(|s| s / mass),
            (1.0 - lambda_max / mass).clamp(0.0, 1.0),
        )
    } else {
        (0.0, [0.0; 3], 0.0)
    };
    Branch {
        mass,
        centroid: if mass_sum > 0.0 { first / mass_sum } else { 0.0 },
        remote_up,
        spin1,
        product_residual: residual,
    }
}

/// Unnormalized `<S1>` from a 4x4 density matrix in the `uu, ud, du, dd`
/// basis.
fn spin1_from_rho(rho: &Matrix4<Complex64>) -> [f64; 3] {
    // rho(s1 s2, s1' s2) summed over s2; index = 2*s1 + s2
    let up_up = rho[(0, 0)].re + rho[(1, 1)].re;
    let down_down = rho[(2, 2)].re + rho[(3, 3)].re;
    // <S_x> + i<S_y> = sum conj(u_up) u_down = rho(down, up)
    let coherence = rho[(2, 0)] + rho[(3, 1)];
    [coherence.re, coherence.im, 0.5 * (up_up - down_down)]
}

/// Window mask used by [`component_ratio`]: inside the peaks' regions (whole
/// grid if `peaks` is empty) and where `P > 1e-3 max(P)`.
fn ratio_window(p: &PositionDistribution, peaks: &[Peak]) -> Vec<bool> {
    let v = p.values();
    let max = v.iter().copied().fold(0.0_f64, f64::max);
    let mut mask: Vec<bool> = v.iter().map(|&x| x > 1e-3 * max).collect();
    if !peaks.is_empty() {
        for (j, m) in mask.iter_mut().enumerate() {
            *m &= peaks.iter().any(|pk| (pk.region.0..=pk.region.1).contains(&j));
        }
    }
    mask
}

pub const RATIO_MIN_MASS: f64 = 1e-6;

/// Least-squares `c` with `u_first_up ~ c * u_first_down` within one
/// remote-spin pair, and the relative misfit
/// `sum |num - c den|^2 / sum |num|^2` over the evaluation window.
pub fn component_ratio(f: &SpinorField, peaks: &[Peak], pair: SpinPair) -> Result<(Complex64, f64), ObservableError> {
    let p = position_distribution(f);
    let mask = ratio_window(&p, peaks);
    let (num_c, den_c) = pair.components();
    let (num, den) = (&f[num_c], &f[den_c]);
    let mut cross = Complex64::new(0.0, 0.0);
    let mut den2 = 0.0;
    let mut num2 = 0.0;
    for j in (0..num.len()).filter(|&j| mask[j]) {
        cross += den[j].conj() * num[j];
        den2 += den[j].norm_sqr();
        num2 += num[j].norm_sqr();
    }
    let dz = f.grid().dz();
    if den2 * dz < RATIO_MIN_MASS {
        return Err(ObservableError::RatioUndefined(den2 * dz));
    }
    let c = cross / den2;
    let misfit: f64 = (0..num.len())
        .filter(|&j| mask[j])
        .map(|j| (num[j] - c * den[j]).norm_sqr())
        .sum();
    let residual = if num2 > 0.0 { misfit / num2 } else { 0.0 };
    Ok((c, residual))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinExpectations {
    /// `<S_x1>, <S_y1>, <S_z1>`.
    pub s1: [f64; 3],
    pub s2z: f64,
}

pub fn spin_expectations(f: &SpinorField) -> SpinExpectations {
    let dz = f.grid().dz();
    let mut coherence = Complex64::new(0.0, 0.0);
    for (up, down) in [
        (Component::UpUp, Component::DownUp),
        (Component::UpDown, Component::DownDown),
    ] {
        coherence += f[up].iter().zip(&f[down]).map(|(a, b)| a.conj() * b).sum::<Complex64>();
    }
    let mass = |c: Component| f[c].iter().map(|v| v.norm_sqr()).sum::<f64>() * dz;
    let s1z =
        0.5 * (mass(Component::UpUp) + mass(Component::UpDown) - mass(Component::DownUp) - mass(Component::DownDown));
    let (m_up, m_down) = f.pair_masses();
    SpinExpectations {
        s1: [coherence.re * dz, coherence.im * dz, s1z],
        s2z: 0.5 * (m_up - m_down),
    }
}

fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    let va = Vector3::from(a);
    let vb = Vector3::from(b);
    let cos = va.dot(&vb) / (va.norm() * vb.norm());
    cos.clamp(-1.0, 1.0).acos()
}

/// Angle in `[0, pi]` between a spin vector and the effective field.
pub fn field_angle<D: Drive + ?Sized>(spin: [f64; 3], drive: &D, tau: f64) -> Result<f64, ObservableError> {
    let norm = Vector3::from(spin).norm();
    if norm.is_nan() || norm <= 1e-6 {
        return Err(ObservableError::DegenerateBloch(norm));
    }
    let b = effective_field(drive, tau);
    if Vector3::from(b).norm() == 0.0 {
        return Err(ObservableError::DegenerateField(tau));
    }
    Ok(angle_between(spin, b))
}

/// Misalignment in `[0, pi/2]` between a branch spin and the effective-field
/// axis: the angle to `B_eff` for a parallel branch, to `-B_eff` for an
/// antiparallel one.
pub fn alignment_angle<D: Drive + ?Sized>(spin: [f64; 3], drive: &D, tau: f64) -> Result<f64, ObservableError> {
    let theta = field_angle(spin, drive, tau)?;
    Ok(theta.min(PI - theta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPhaseSeries {
    /// Sample times with two tracked peaks.
    pub times: Vec<f64>,
    pub z_a: Vec<f64>,
    pub z_b: Vec<f64>,
    /// Centre of each one-period fit window.
    pub window_times: Vec<f64>,
    pub phase_a: Vec<f64>,
    pub phase_b: Vec<f64>,
    pub amplitude_a: Vec<f64>,
    pub amplitude_b: Vec<f64>,
    /// `phase_b - phase_a` wrapped to `[0, 2 pi)`.
    pub delta: Vec<f64>,
}

impl BranchPhaseSeries {
    /// Unsigned phase separation `min(d, 2 pi - d)` in `[0, pi]` per window.
    pub fn separation(&self) -> Vec<f64> {
        self.delta.iter().map(|&d| d.min(TAU - d)).collect()
    }
}

/// Windows advance by this fraction of a period.
const WINDOW_STRIDE: f64 = TAU / 8.0;
const MIN_WINDOW_SAMPLES: usize = 8;

/// Tracks the two cat branches through time and fits each branch centroid over
/// sliding one-period windows to `A cos(tau + phi) + B`.
///
/// Branch `a` is the remote-spin-up branch when every two-peak sample carries
/// [`Peak::remote_up`] labels; otherwise identities are carried forward by
/// nearest linear extrapolation, starting with `a` as the left peak.
pub fn track_branch_phases(series: &[(f64, Vec<Peak>)]) -> Result<BranchPhaseSeries, ObservableError> {
    let two: Vec<(f64, &Peak, &Peak)> = series
        .iter()
        .filter_map(|(t, peaks)| match peaks.as_slice() {
            [l, r] => Some((*t, l, r)),
            _ => None,
        })
        .collect();
    let insufficient = |got| ObservableError::InsufficientSamples {
        needed: 2 * MIN_WINDOW_SAMPLES,
        got,
    };
    if two.len() < 2 * MIN_WINDOW_SAMPLES || two[two.len() - 1].0 - two[0].0 < 2.0 * TAU {
        return Err(insufficient(two.len()));
    }

    let labelled = two
        .iter()
        .all(|(_, l, r)| l.remote_up.is_some() && r.remote_up.is_some());
    let mut times = Vec::with_capacity(two.len());
    let mut z_a: Vec<f64> = Vec::with_capacity(two.len());
    let mut z_b: Vec<f64> = Vec::with_capacity(two.len());
    for &(t, l, r) in &two {
        let swap = if labelled {
            r.remote_up > l.remote_up
        } else if z_a.is_empty() {
            false
        } else {
            let k = z_a.len();
            let predict = |z: &[f64]| {
                if k >= 2 {
                    let slope = (z[k - 1] - z[k - 2]) / (times[k - 1] - times[k - 2]);
                    z[k - 1] + slope * (t - times[k - 1])
                } else {
                    z[k - 1]
                }
            };
            let (pa, pb) = (predict(&z_a), predict(&z_b));
            let keep = (l.centroid - pa).powi(2) + (r.centroid - pb).powi(2);
            let swapped = (r.centroid - pa).powi(2) + (l.centroid - pb).powi(2);
            swapped < keep
        };
        let (a, b) = if swap { (r, l) } else { (l, r) };
        times.push(t);
        z_a.push(a.centroid);
        z_b.push(b.centroid);
    }

    let mut out = BranchPhaseSeries {
        times,
        z_a,
        z_b,
        window_times: Vec::new(),
        phase_a: Vec::new(),
        phase_b: Vec::new(),
        amplitude_a: Vec::new(),
        amplitude_b: Vec::new(),
        delta: Vec::new(),
    };
    let t0 = out.times[0];
    let t_end = out.times[out.times.len() - 1];
    let mut start = t0;
    let mut lo = 0;
    while start + TAU <= t_end + 1e-9 {
        while out.times[lo] < start - 1e-12 {
            lo += 1;
        }
        let hi = out.times.partition_point(|&t| t < start + TAU - 1e-12);
        if hi - lo >= MIN_WINDOW_SAMPLES {
            let ts = &out.times[lo..hi];
            if let (Some(fa), Some(fb)) = (fit_cosine(ts, &out.z_a[lo..hi]), fit_cosine(ts, &out.z_b[lo..hi])) {
                out.window_times.push(start + TAU / 2.0);
                out.phase_a.push(fa.0);
                out.phase_b.push(fb.0);
                out.amplitude_a.push(fa.1);
                out.amplitude_b.push(fb.1);
                let d = (fb.0 - fa.0).rem_euclid(TAU);
                out.delta.push(if d >= TAU { 0.0 } else { d });
            }
        }
        start += WINDOW_STRIDE;
    }
    if out.delta.is_empty() {
        return Err(insufficient(out.times.len()));
    }
    Ok(out)
}

/// Least-squares `z ~ c1 cos t + c2 sin t + c0`; returns `(phi, amplitude)` of
/// the equivalent `A cos(t + phi)`.
fn fit_cosine(t: &[f64], z: &[f64]) -> Option<(f64, f64)> {
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for (&ti, &zi) in t.iter().zip(z) {
        let row = Vector3::new(ti.cos(), ti.sin(), 1.0);
        ata += row * row.transpose();
        atb += row * zi;
    }
    let x = ata.cholesky()?.solve(&atb);
    let (c1, c2) = (x[0], x[1]);
    Some(((-c2).atan2(c1), c1.hypot(c2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::coherent_state;
    use crate::grid::make_grid;
    use crate::params::PhysicalParams;
    use crate::schedule::DriveSchedule;
    use proptest::prelude::*;

    fn grid() -> Arc<SpatialGrid> {
        Arc::new(make_grid(-40.0, 40.0, 1024).unwrap())
    }

    fn gaussian(g: &SpatialGrid, z0: f64, k: f64) -> Vec<Complex64> {
        coherent_state(g, Complex64::new(z0 / 2f64.sqrt(), k / 2f64.sqrt()))
    }

    /// u_a chi_a |up>_2 + u_b chi_b |down>_2 with the given amplitudes.
    fn synthetic_cat(chi_a: (Complex64, Complex64), chi_b: (Complex64, Complex64)) -> SpinorField {
        let g = grid();
        let ua = gaussian(&g, -12.0, 1.0);
        let ub = gaussian(&g, 15.0, -2.0);
        let mut f = SpinorField::zeros(g);
        for j in 0..ua.len() {
            f[Component::UpUp][j] = ua[j] * chi_a.0;
            f[Component::DownUp][j] = ua[j] * chi_a.1;
            f[Component::UpDown][j] = ub[j] * chi_b.0;
            f[Component::DownDown][j] = ub[j] * chi_b.1;
        }
        f.normalize();
        f
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn initial_state_single_peak_at_minus_twenty() {
        let g = Arc::new(make_grid(-80.0, 80.0, 2048).unwrap());
        let f = SpinorField::entangled_initial(g, &PhysicalParams::paper());
        let p = position_distribution(&f);
        assert!((p.total_mass() - 1.0).abs() < 1e-12);
        assert!((p.mean() + 20.0).abs() < 1e-10);
        let peaks = find_peaks(&p, PeakSettings::default());
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].position + 20.0).abs() < 0.05);
        assert!((peaks[0].mass - 1.0).abs() < 1e-12);
        assert!(matches!(
            decompose_cat(&f, &peaks),
            Err(ObservableError::DecompositionUnavailable(1))
        ));
        let s = spin_expectations(&f);
        assert!(s.s1.iter().all(|x| x.abs() < 1e-15));
        assert!(s.s2z.abs() < 1e-15);
        assert!(matches!(
            component_ratio(&f, &peaks, SpinPair::RemoteUp),
            Err(ObservableError::RatioUndefined(_))
        ));
    }

    #[test]
    fn zero_field_has_no_peaks() {
        let f = SpinorField::zeros(grid());
        let p = position_distribution(&f);
        assert!(p.values().iter().all(|&x| x == 0.0));
        assert!(find_peaks(&p, PeakSettings::default()).is_empty());
    }

    #[test]
    fn up_up_only_spins() {
        let g = grid();
        let mut f = SpinorField::zeros(g.clone());
        f[Component::UpUp] = gaussian(&g, 3.0, 0.0);
        f.normalize();
        let s = spin_expectations(&f);
        assert!((s.s2z - 0.5).abs() < 1e-12);
        assert!((s.s1[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spin_expectations_of_a_tilted_state() {
        // chi = (cos(t/2), e^{i phi} sin(t/2)) has <S> = (sin t cos phi, sin t sin phi, cos t)/2
        let (t, phi): (f64, f64) = (1.1, 0.7);
        let g = grid();
        let u = gaussian(&g, 0.0, 0.0);
        let mut f = SpinorField::zeros(g);
        for (j, v) in u.iter().enumerate() {
            f[Component::UpDown][j] = v * (t / 2.0).cos();
            f[Component::DownDown][j] = v * Complex64::from_polar((t / 2.0).sin(), phi);
        }
        f.normalize();
        let s = spin_expectations(&f);
        let expect = [t.sin() * phi.cos() / 2.0, t.sin() * phi.sin() / 2.0, t.cos() / 2.0];
        for (got, want) in s.s1.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((s.s2z + 0.5).abs() < 1e-12);
    }

    #[test]
    fn synthetic_cat_decomposes_exactly() {
        let chi_a = (c(0.6, 0.0), c(0.0, 0.8));
        let chi_b = (c(-0.28, 0.96), c(0.0, 0.0));
        let f = synthetic_cat(chi_a, chi_b);
        let p = position_distribution(&f);
        let peaks = find_peaks(&p, PeakSettings::default());
        assert_eq!(peaks.len(), 2);
        let cat = decompose_cat(&f, &peaks).unwrap();
        assert!((cat.a.mass + cat.b.mass - p.total_mass()).abs() < 1e-10);
        assert!((cat.a.mass - 0.5).abs() < 1e-10);
        assert!((cat.a.remote_up - 1.0).abs() < 1e-10);
        assert!(cat.b.remote_up.abs() < 1e-10);
        assert!(cat.a.product_residual < 1e-10);
        assert!(cat.b.product_residual < 1e-10);
        assert!((cat.a.centroid + 12.0).abs() < 1e-9);
        assert!((cat.b.centroid - 15.0).abs() < 1e-9);
        // chi_a = (0.6, 0.8i): <S> = (0, 0.48, -0.14)
        let s = cat.a.spin1;
        assert!(s[0].abs() < 1e-10 && (s[1] - 0.48).abs() < 1e-10 && (s[2] + 0.14).abs() < 1e-10);
        assert!((cat.b.spin1[2] - 0.5).abs() < 1e-10);
        // a entangled branch has a non-zero residual
        let g = grid();
        let mut ent = f.clone();
        let shifted = gaussian(&g, -10.0, 0.0);
        for (j, v) in shifted.iter().enumerate() {
            ent[Component::DownUp][j] = v * 0.8;
        }
        ent.normalize();
        let peaks = find_peaks(&position_distribution(&ent), PeakSettings::default());
        let cat = decompose_cat(&ent, &peaks).unwrap();
        assert!(cat.a.product_residual > 0.01);
    }

    #[test]
    fn exact_proportionality_recovered() {
        let g = grid();
        let u = gaussian(&g, -5.0, 0.5);
        let ratio = c(2.0, 1.0);
        let mut f = SpinorField::zeros(g);
        f[Component::DownUp] = u.clone();
        f[Component::UpUp] = u.iter().map(|v| v * ratio).collect();
        f.normalize();
        let peaks = find_peaks(&position_distribution(&f), PeakSettings::default());
        let (cr, res) = component_ratio(&f, &peaks, SpinPair::RemoteUp).unwrap();
        assert!((cr - ratio).norm() < 1e-10);
        assert!(res <= 1e-12);
        assert!(matches!(
            component_ratio(&f, &peaks, SpinPair::RemoteDown),
            Err(ObservableError::RatioUndefined(_))
        ));
    }

    #[test]
    fn peaks_merge_within_width() {
        let g = grid();
        let mut f = SpinorField::zeros(g.clone());
        f[Component::UpUp] = g
            .positions()
            .iter()
            .map(|z| c((-4.0 * (z - 0.8).powi(2)).exp() + (-4.0 * (z + 0.8).powi(2)).exp(), 0.0))
            .collect();
        f.normalize();
        let p = position_distribution(&f);
        assert_eq!(find_peaks(&p, PeakSettings::default()).len(), 1);
        let narrow = PeakSettings {
            threshold: 0.1,
            merge_width: 0.5,
        };
        assert_eq!(find_peaks(&p, narrow).len(), 2);
    }

    #[test]
    fn alignment_angles() {
        let s = DriveSchedule::paper();
        let b = s.effective_field(50.0).unwrap();
        assert!(alignment_angle(b, &s, 50.0).unwrap() < 1e-7);
        let anti = b.map(|x| -0.3 * x);
        assert!(alignment_angle(anti, &s, 50.0).unwrap() < 1e-7);
        assert!((field_angle(anti, &s, 50.0).unwrap() - PI).abs() < 1e-7);
        let ortho = [b[2], 0.0, -b[0]];
        assert!((alignment_angle(ortho, &s, 50.0).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!(matches!(
            alignment_angle([0.0; 3], &s, 50.0),
            Err(ObservableError::DegenerateBloch(_))
        ));
    }

    fn synthetic_series(za: impl Fn(f64) -> f64, zb: impl Fn(f64) -> f64, t_end: f64) -> Vec<(f64, Vec<Peak>)> {
        let dt = 0.05;
        (0..=(t_end / dt) as usize)
            .map(|k| {
                let t = k as f64 * dt + 0.013;
                let mk = |z: f64| Peak {
                    position: z,
                    height: 1.0,
                    mass: 0.5,
                    centroid: z,
                    region: (0, 0),
                    remote_up: None,
                };
                let (a, b) = (za(t), zb(t));
                let mut peaks = vec![mk(a), mk(b)];
                peaks.sort_by(|x, y| x.position.total_cmp(&y.position));
                (t, peaks)
            })
            .collect()
    }

    #[test]
    fn opposite_phase_sinusoids() {
        let series = synthetic_series(|t| t.cos(), |t| (t + PI).cos(), 20.0);
        let out = track_branch_phases(&series).unwrap();
        assert!(!out.delta.is_empty());
        for d in &out.delta {
            assert!((d - PI).abs() < 1e-6, "delta {d}");
        }
    }

    #[test]
    fn identical_sinusoids() {
        let series = synthetic_series(|t| 3.0 * t.cos() - 1.0, |t| 3.0 * t.cos() + 1.0, 15.0);
        let out = track_branch_phases(&series).unwrap();
        for d in &out.delta {
            assert!(*d < 1e-9 || (TAU - d) < 1e-9, "delta {d}");
        }
    }

    #[test]
    fn labelled_peaks_define_branch_a() {
        let mut series = synthetic_series(|t| 5.0 * (t + 0.4).cos(), |t| 5.0 * (t - 0.4).cos() + 0.1, 14.0);
        for (t, peaks) in &mut series {
            for p in peaks.iter_mut() {
                let za = 5.0 * (*t + 0.4).cos();
                p.remote_up = Some(if (p.centroid - za).abs() < 1e-12 { 0.99 } else { 0.01 });
            }
        }
        let out = track_branch_phases(&series).unwrap();
        for (pa, pb) in out.phase_a.iter().zip(&out.phase_b) {
            assert!((pa - 0.4).abs() < 1e-6 && (pb + 0.4).abs() < 1e-6);
        }
        for d in &out.delta {
            assert!((d - (TAU - 0.8)).abs() < 1e-6);
        }
        assert!(out.separation().iter().all(|s| (s - 0.8).abs() < 1e-6));
    }

    #[test]
    fn too_short_series_rejected() {
        let series = synthetic_series(|t| t.cos(), |t| -t.cos(), 5.0);
        assert!(matches!(
            track_branch_phases(&series),
            Err(ObservableError::InsufficientSamples { .. })
        ));
    }

    proptest! {
        #[test]
        fn product_branches_recovered(
            t1 in 0.0f64..PI, p1 in -PI..PI, t2 in 0.0f64..PI, p2 in -PI..PI,
        ) {
            let chi = |t: f64, p: f64| (c((t / 2.0).cos(), 0.0), Complex64::from_polar((t / 2.0).sin(), p));
            let f = synthetic_cat(chi(t1, p1), chi(t2, p2));
            let peaks = find_peaks(&position_distribution(&f), PeakSettings::default());
            prop_assert_eq!(peaks.len(), 2);
            let cat = decompose_cat(&f, &peaks).unwrap();
            prop_assert!(cat.a.product_residual < 1e-10 && cat.b.product_residual < 1e-10);
            prop_assert!((cat.a.remote_up - 1.0).abs() < 1e-10 && cat.b.remote_up.abs() < 1e-10);
            prop_assert!((cat.a.mass + cat.b.mass - 1.0).abs() < 1e-10);
            prop_assert!((0.0..=1.0).contains(&cat.a.product_residual));
        }

        #[test]
        fn ratio_recovers_injected_constant(re in -10.0f64..10.0, im in -10.0f64..10.0) {
            let g = grid();
            let u = gaussian(&g, 4.0, -1.0);
            let ratio = c(re, im);
            let mut f = SpinorField::zeros(g);
            f[Component::DownDown] = u.clone();
            f[Component::UpDown] = u.iter().map(|v| v * ratio).collect();
            let (cr, res) = component_ratio(&f, &[], SpinPair::RemoteDown).unwrap();
            prop_assert!((cr - ratio).norm() < 1e-10 * ratio.norm().max(1.0));
            prop_assert!(res < 1e-12);
        }
    }
}
