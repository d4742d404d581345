//! Lattice geometry and operators.
//!
//! The unit interval is split into `N` sites `I_j = ((j-1)/N, j/N]` with
//! periodic identification, and into `k` macrosites, each a block of `N/k`
//! consecutive sites. Everything here is deterministic real arithmetic: the
//! canonical projection onto step functions, the periodic second-difference
//! Laplacian, its trigonometric eigensystem, and the heat semigroup it
//! generates.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("site count {n} is not a positive multiple of macrosite count {k}")]
    BadGeometry { n: usize, k: usize },
    #[error("site index {j} out of range 1..={n}")]
    IndexOutOfRange { j: usize, n: usize },
    #[error("need at least {need} samples for N={n}, got {got}")]
    InsufficientSamples { need: usize, got: usize, n: usize },
}

/// Fine/coarse lattice geometry: `N` sites, `k` macrosites, `k | N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    n_sites: usize,
    n_macro: usize,
}

impl Grid {
    pub fn new(n_sites: usize, n_macro: usize) -> Result<Self, LatticeError> {
        if n_sites == 0 || n_macro == 0 || n_sites % n_macro != 0 {
            return Err(LatticeError::BadGeometry {
                n: n_sites,
                k: n_macro,
            });
        }
        Ok(Self { n_sites, n_macro })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_macro(&self) -> usize {
        self.n_macro
    }

    /// Sites per macrosite, `N/k`.
    pub fn block(&self) -> usize {
        self.n_sites / self.n_macro
    }

    pub fn site_length(&self) -> f64 {
        1.0 / self.n_sites as f64
    }

    /// Macrosite of site `j` (both 1-based): the upper integer part of `jk/N`.
    pub fn macrosite_of(&self, j: usize) -> Result<usize, LatticeError> {
        if j < 1 || j > self.n_sites {
            return Err(LatticeError::IndexOutOfRange {
                j,
                n: self.n_sites,
            });
        }
        Ok((j * self.n_macro).div_ceil(self.n_sites))
    }

    /// 0-based variant used by the engines' hot loops.
    #[inline]
    pub fn macro_of0(&self, j0: usize) -> usize {
        debug_assert!(j0 < self.n_sites);
        j0 / self.block()
    }

    /// 0-based site range of 0-based macrosite `l0`.
    #[inline]
    pub fn macro_sites0(&self, l0: usize) -> std::ops::Range<usize> {
        let b = self.block();
        l0 * b..(l0 + 1) * b
    }
}

/// A real step function on the lattice: one value per site.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n_sites());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_sites()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_sites()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Value at the site containing `x` (periodic, sites are `((j-1)/N, j/N]`).
    pub fn at(&self, x: f64) -> f64 {
        let n = self.grid.n_sites();
        let xm = x.rem_euclid(1.0);
        let j = (xm * n as f64).ceil() as usize;
        let j = if j == 0 { n } else { j.min(n) };
        self.values[j - 1]
    }

    /// Resample onto another grid by evaluating at site midpoints.
    pub fn resample_midpoint(&self, grid: Grid) -> Field {
        if grid == self.grid {
            return self.clone();
        }
        let n = grid.n_sites();
        Field::new(
            grid,
            (1..=n)
                .map(|j| self.at((j as f64 - 0.5) / n as f64))
                .collect(),
        )
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        (inner(self, self)).sqrt()
    }
}

/// `<f, g>_2 = N^{-1} sum_j f_j g_j`.
pub fn inner(f: &Field, g: &Field) -> f64 {
    assert_eq!(f.grid, g.grid);
    let n = f.grid.n_sites() as f64;
    f.values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n
}

/// Both lattice norms at once: `(sup, l2)`.
pub fn norms(f: &Field) -> (f64, f64) {
    (f.sup_norm(), f.l2_norm())
}

/// Periodic second difference, `(Δ_N v)_j = N^2 (v_{j-1} - 2 v_j + v_{j+1})`.
pub fn discrete_laplacian(v: &Field) -> Field {
    let n = v.grid.n_sites();
    let n2 = (n as f64) * (n as f64);
    let mut out = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate() {
        let left = v.values[(j + n - 1) % n];
        let right = v.values[(j + 1) % n];
        *o = n2 * (left - 2.0 * v.values[j] + right);
    }
    Field::new(v.grid, out)
}

/// Canonical projection of a pointwise-evaluable function: component `j` is
/// `N ∫_{I_j} f`. Composite Simpson per site, starting at 8 panels and
/// doubling until two refinements agree to 1e-12 relative (or 512 panels).
pub fn project_fn<F: Fn(f64) -> f64>(f: F, grid: Grid) -> Field {
    let n = grid.n_sites();
    let mut vals = vec![0.0; n];
    for (j, v) in vals.iter_mut().enumerate() {
        let x0 = j as f64 / n as f64;
        let len = grid.site_length();
        let mut panels = 8;
        let mut prev = simpson(&f, x0, len, panels);
        loop {
            panels *= 2;
            let next = simpson(&f, x0, len, panels);
            let scale = next.abs().max(1.0);
            if (next - prev).abs() <= 1e-12 * scale || panels >= 512 {
                prev = next;
                break;
            }
            prev = next;
        }
        *v = prev * n as f64;
    }
    Field::new(grid, vals)
}

fn simpson<F: Fn(f64) -> f64>(f: &F, x0: f64, len: f64, panels: usize) -> f64 {
    let h = len / panels as f64;
    let mut s = f(x0) + f(x0 + len);
    for p in 1..panels {
        let w = if p % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(x0 + p as f64 * h);
    }
    s * h / 3.0
}

/// Exact projection of a step function onto another grid: component `j` is
/// `N ∫_{I_j} f` with the overlap integrals of the source sites computed
/// exactly. On the source grid this is the identity.
pub fn project_field(f: &Field, grid: Grid) -> Field {
    if f.grid() == grid {
        return f.clone();
    }
    let n_src = f.grid().n_sites();
    let n_dst = grid.n_sites();
    let mut vals = vec![0.0; n_dst];
    for (j, v) in vals.iter_mut().enumerate() {
        let a = j as f64 / n_dst as f64;
        let b = (j + 1) as f64 / n_dst as f64;
        let mut acc = 0.0;
        let i0 = (a * n_src as f64).floor() as usize;
        let mut lo = a;
        let mut i = i0;
        while lo < b - 1e-15 {
            let cell_hi = (i + 1) as f64 / n_src as f64;
            let hi = cell_hi.min(b);
            acc += f.values[i.min(n_src - 1)] * (hi - lo);
            lo = hi;
            i += 1;
        }
        *v = acc * n_dst as f64;
    }
    Field::new(grid, vals)
}

/// Projection from dense samples on the uniform closed grid
/// `x_i = i/(L-1)`; the piecewise-linear interpolant is integrated exactly
/// over each site. Requires `L >= 8N`.
pub fn project_samples(samples: &[f64], grid: Grid) -> Result<Field, LatticeError> {
    let n = grid.n_sites();
    let l = samples.len();
    if l < 8 * n || l < 2 {
        return Err(LatticeError::InsufficientSamples {
            need: 8 * n,
            got: l,
            n,
        });
    }
    let dx = 1.0 / (l - 1) as f64;
    // Integral of the interpolant over [a, b] ⊆ [x_i, x_{i+1}] pieces.
    let mut vals = vec![0.0; n];
    for (j, v) in vals.iter_mut().enumerate() {
        let a = j as f64 / n as f64;
        let b = (j + 1) as f64 / n as f64;
        let mut acc = 0.0;
        let i0 = (a / dx).floor() as usize;
        let mut lo = a;
        let mut i = i0;
        while lo < b - 1e-15 {
            let seg_hi = ((i + 1) as f64 * dx).min(b);
            let x_i = i as f64 * dx;
            let f_i = samples[i.min(l - 1)];
            let f_ip = samples[(i + 1).min(l - 1)];
            let slope = (f_ip - f_i) / dx;
            let fl = f_i + slope * (lo - x_i);
            let fh = f_i + slope * (seg_hi - x_i);
            acc += 0.5 * (fl + fh) * (seg_hi - lo);
            lo = seg_hi;
            i += 1;
        }
        *v = acc * n as f64;
    }
    Ok(Field::new(grid, vals))
}

/// Angular flavor of an eigenvector of the periodic Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenKind {
    Constant,
    Cos,
    Sin,
    Alternating,
}

/// One eigenpair of `-Δ_N`: eigenvalue `β_{m,N} = 2N^2 (1 - cos(πm/N))`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub m: usize,
    pub kind: EigenKind,
    pub eigenvalue: f64,
    pub eigenvector: Field,
}

/// Eigenvalue formula `β_{m,N} = 2N^2 (1 - cos(πm/N))`.
pub fn beta(m: usize, n: usize) -> f64 {
    let nf = n as f64;
    2.0 * nf * nf * (1.0 - (std::f64::consts::PI * m as f64 / nf).cos())
}

/// The full orthonormal trigonometric eigenbasis, `N` pairs.
///
/// Modes are indexed by even `m`: the constant mode `m = 0`, then
/// `√2 cos(πmj/N)` and `√2 sin(πmj/N)` for `m = 2, 4, …`, and for even `N`
/// the alternating mode `cos(πj)` carrying `m = N`. Ordering is `m`
/// ascending with cos before sin.
pub fn eigenpairs(grid: Grid) -> Vec<EigenPair> {
    let n = grid.n_sites();
    let mut out = Vec::with_capacity(n);
    out.push(EigenPair {
        m: 0,
        kind: EigenKind::Constant,
        eigenvalue: 0.0,
        eigenvector: Field::constant(grid, 1.0),
    });
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut m = 2;
    while m < n {
        let mut cosv = vec![0.0; n];
        let mut sinv = vec![0.0; n];
        for j in 1..=n {
            let arg = std::f64::consts::PI * (m * j) as f64 / n as f64;
            cosv[j - 1] = sqrt2 * arg.cos();
            sinv[j - 1] = sqrt2 * arg.sin();
        }
        out.push(EigenPair {
            m,
            kind: EigenKind::Cos,
            eigenvalue: beta(m, n),
            eigenvector: Field::new(grid, cosv),
        });
        out.push(EigenPair {
            m,
            kind: EigenKind::Sin,
            eigenvalue: beta(m, n),
            eigenvector: Field::new(grid, sinv),
        });
        m += 2;
    }
    if n % 2 == 0 {
        let alt: Vec<f64> = (1..=n).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
        out.push(EigenPair {
            m: n,
            kind: EigenKind::Alternating,
            eigenvalue: beta(n, n),
            eigenvector: Field::new(grid, alt),
        });
    }
    debug_assert_eq!(out.len(), n);
    out
}

/// Heat semigroup `T_N(t) = e^{Δ_N t}` applied spectrally.
///
/// Power-of-two `N` goes through a forward/inverse FFT; other sizes use the
/// direct eigenbasis synthesis.
pub fn heat_semigroup(v: &Field, t: f64) -> Field {
    assert!(t >= 0.0, "semigroup time must be nonnegative");
    if t == 0.0 {
        return v.clone();
    }
    let n = v.grid.n_sites();
    if n.is_power_of_two() && n >= 2 {
        HeatPlan::new(v.grid, t).apply(v)
    } else {
        heat_direct(v, t)
    }
}

fn heat_direct(v: &Field, t: f64) -> Field {
    let pairs = eigenpairs(v.grid);
    let mut out = Field::zeros(v.grid);
    for p in &pairs {
        let c = inner(v, &p.eigenvector) * (-p.eigenvalue * t).exp();
        for (o, e) in out.values.iter_mut().zip(p.eigenvector.values()) {
            *o += c * e;
        }
    }
    out
}

/// Precomputed spectral multipliers for one `(grid, t)`; reused by the PDMP
/// flow, which applies the same half-step thousands of times.
pub struct HeatPlan {
    grid: Grid,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    multipliers: Vec<f64>,
    scratch: Vec<Complex<f64>>,
}

impl HeatPlan {
    /// Panics unless `grid.n_sites()` is a power of two (the FFT path).
    pub fn new(grid: Grid, t: f64) -> Self {
        let n = grid.n_sites();
        assert!(n.is_power_of_two(), "HeatPlan requires power-of-two N");
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        // DFT frequency q carries eigenvalue β_{2q,N} (= β for m = 2q; the
        // Nyquist bin q = N/2 is the alternating mode, m = N).
        let multipliers = (0..n)
            .map(|q| {
                let m = 2 * q.min(n - q);
                (-beta(m, n) * t).exp()
            })
            .collect();
        Self {
            grid,
            fwd,
            inv,
            multipliers,
            scratch: vec![Complex::default(); n],
        }
    }

    pub fn apply(&self, v: &Field) -> Field {
        let mut buf = self.scratch.clone();
        self.apply_into(v.values(), &mut buf)
    }

    /// In-place variant over a caller-owned scratch buffer.
    pub fn apply_into(&self, values: &[f64], buf: &mut Vec<Complex<f64>>) -> Field {
        let n = self.grid.n_sites();
        assert_eq!(values.len(), n);
        buf.clear();
        buf.extend(values.iter().map(|&x| Complex::new(x, 0.0)));
        self.fwd.process(buf);
        for (b, m) in buf.iter_mut().zip(&self.multipliers) {
            *b *= m;
        }
        self.inv.process(buf);
        let scale = 1.0 / n as f64;
        Field::new(self.grid, buf.iter().map(|c| c.re * scale).collect())
    }
}

/// Per-site integrals of a weight polynomial over one macrosite.
///
/// Kind `a` yields `∫_{I_j} w`, kind `b` yields `N ∫_{I_j} w`; integrals are
/// exact antiderivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    A,
    B,
}

pub fn macro_weights(
    coeffs: &[f64],
    grid: Grid,
    l: usize,
    kind: WeightKind,
) -> Result<Vec<f64>, LatticeError> {
    if l < 1 || l > grid.n_macro() {
        return Err(LatticeError::IndexOutOfRange {
            j: l,
            n: grid.n_macro(),
        });
    }
    let n = grid.n_sites() as f64;
    let scale = match kind {
        WeightKind::A => 1.0,
        WeightKind::B => n,
    };
    Ok(grid
        .macro_sites0(l - 1)
        .map(|j0| scale * poly_integral(coeffs, j0 as f64 / n, (j0 + 1) as f64 / n))
        .collect())
}

/// `∫_a^b Σ c_k x^k dx` by the exact antiderivative.
pub fn poly_integral(coeffs: &[f64], a: f64, b: f64) -> f64 {
    let mut hi = 0.0;
    let mut lo = 0.0;
    for (k, &c) in coeffs.iter().enumerate() {
        let kk = (k + 1) as f64;
        hi += c * b.powi(k as i32 + 1) / kk;
        lo += c * a.powi(k as i32 + 1) / kk;
    }
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, k: usize) -> Grid {
        Grid::new(n, k).unwrap()
    }

    #[test]
    fn geometry_validation() {
        assert!(Grid::new(16, 4).is_ok());
        assert_eq!(
            Grid::new(15, 4).unwrap_err(),
            LatticeError::BadGeometry { n: 15, k: 4 }
        );
        assert!(Grid::new(0, 1).is_err());
        assert!(Grid::new(4, 0).is_err());
    }

    #[test]
    fn macrosite_of_matches_ceil_formula() {
        let g = grid(16, 4);
        assert_eq!(g.macrosite_of(1).unwrap(), 1);
        assert_eq!(g.macrosite_of(4).unwrap(), 1);
        assert_eq!(g.macrosite_of(5).unwrap(), 2);
        assert_eq!(g.macrosite_of(16).unwrap(), 4);
        assert!(g.macrosite_of(0).is_err());
        assert!(g.macrosite_of(17).is_err());
        for j in 1..=16 {
            assert_eq!(g.macrosite_of(j).unwrap() - 1, g.macro_of0(j - 1));
        }
    }

    #[test]
    fn projection_of_constant_is_constant() {
        let g = grid(8, 2);
        let f = project_fn(|_| 3.25, g);
        for v in f.values() {
            assert!((v - 3.25).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_of_identity_n2() {
        let g = grid(2, 1);
        let f = project_fn(|x| x, g);
        assert!((f.values()[0] - 0.25).abs() < 1e-12);
        assert!((f.values()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn projection_sup_error_decays_for_sine() {
        // Lipschitz bound: ‖P_N f − f‖_∞ ≤ 2π/N for f = sin(2πx).
        for n in [8, 16, 32, 64] {
            let g = grid(n, 1);
            let f = project_fn(|x| (2.0 * std::f64::consts::PI * x).sin(), g);
            let mut worst: f64 = 0.0;
            for i in 0..1000 {
                let x = (i as f64 + 0.5) / 1000.0;
                let err = (f.at(x) - (2.0 * std::f64::consts::PI * x).sin()).abs();
                worst = worst.max(err);
            }
            assert!(
                worst <= 2.0 * std::f64::consts::PI / n as f64,
                "N={n}: sup err {worst}"
            );
        }
    }

    #[test]
    fn projection_idempotent_on_step_functions() {
        let g = grid(4, 1);
        let f = Field::new(g, vec![1.0, -2.0, 0.5, 3.0]);
        assert_eq!(project_field(&f, g), f);
        // Coarsening a refinement of a step function recovers it exactly.
        let fine = project_field(&f, grid(12, 1));
        assert_eq!(project_field(&fine, g), f);
    }

    #[test]
    fn project_samples_handles_smooth_input() {
        let g = grid(4, 1);
        let smooth = |x: f64| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).cos();
        let dense: Vec<f64> = (0..=65536).map(|i| smooth(i as f64 / 65536.0)).collect();
        let via_samples = project_samples(&dense, g).unwrap();
        let via_quadrature = project_fn(smooth, g);
        for (a, b) in via_samples.values().iter().zip(via_quadrature.values()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn project_samples_rejects_sparse_input() {
        let g = grid(8, 1);
        let err = project_samples(&[0.0; 17], g).unwrap_err();
        assert_eq!(
            err,
            LatticeError::InsufficientSamples {
                need: 64,
                got: 17,
                n: 8
            }
        );
    }

    #[test]
    fn laplacian_annihilates_constants() {
        let g = grid(8, 1);
        let z = discrete_laplacian(&Field::constant(g, 7.0));
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_impulse_stencil_n4() {
        let g = grid(4, 1);
        let v = Field::new(g, vec![1.0, 0.0, 0.0, 0.0]);
        let lap = discrete_laplacian(&v);
        assert_eq!(lap.values(), &[-32.0, 16.0, 0.0, 16.0]);
    }

    #[test]
    fn eigen_relation_to_machine_precision() {
        for n in [5, 8, 12] {
            let g = grid(n, 1);
            for p in eigenpairs(g) {
                let lap = discrete_laplacian(&p.eigenvector);
                for (l, e) in lap.values().iter().zip(p.eigenvector.values()) {
                    let resid = (l + p.eigenvalue * e).abs();
                    assert!(
                        resid <= 1e-8 * p.eigenvalue.max(1.0),
                        "N={n} m={} resid {resid}",
                        p.m
                    );
                }
            }
        }
    }

    #[test]
    fn eigenvalue_formula_n4_m2() {
        assert!((beta(2, 4) - 32.0).abs() <= 1e-12 * 32.0);
        assert_eq!(beta(0, 4), 0.0);
        assert!((beta(4, 4) - 64.0).abs() <= 1e-12 * 64.0);
    }

    #[test]
    fn eigenbasis_gram_is_identity() {
        for n in [4, 7, 16] {
            let g = grid(n, 1);
            let pairs = eigenpairs(g);
            assert_eq!(pairs.len(), n);
            for (i, p) in pairs.iter().enumerate() {
                for (j, q) in pairs.iter().enumerate() {
                    let dot = inner(&p.eigenvector, &q.eigenvector);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (dot - want).abs() < 1e-12,
                        "N={n} <{},{}> = {dot}",
                        p.m,
                        q.m
                    );
                }
            }
        }
    }

    #[test]
    fn semigroup_identity_at_zero_and_on_constants() {
        let g = grid(8, 1);
        let f = Field::new(g, vec![1.0, 2.0, -1.0, 0.0, 3.0, -2.0, 0.5, 1.5]);
        assert_eq!(heat_semigroup(&f, 0.0), f);
        let c = Field::constant(g, 4.2);
        let out = heat_semigroup(&c, 0.7);
        for v in out.values() {
            assert!((v - 4.2).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_and_direct_semigroup_agree() {
        let g = grid(16, 1);
        let f = project_fn(|x| (2.0 * std::f64::consts::PI * x).sin() + 0.3 * x, g);
        for t in [1e-4, 0.01, 0.3] {
            let a = heat_semigroup(&f, t);
            let b = heat_direct(&f, t);
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn semigroup_contraction_and_composition() {
        use rand::Rng;
        let mut rng = crate::rng::stream(0xD1FF, 0);
        for n in [8, 12] {
            let g = grid(n, 1);
            for _ in 0..200 {
                let f = Field::new(g, (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect());
                let s: f64 = rng.gen_range(0.0..1.0);
                let t: f64 = rng.gen_range(0.0..1.0);
                let tf = heat_semigroup(&f, t);
                assert!(tf.sup_norm() <= f.sup_norm() + 1e-10);
                let two = heat_semigroup(&heat_semigroup(&f, s), t);
                let one = heat_semigroup(&f, s + t);
                for (a, b) in two.values().iter().zip(one.values()) {
                    assert!((a - b).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn laplacian_symmetry_and_conservation() {
        use rand::Rng;
        let mut rng = crate::rng::stream(0xD1FE, 0);
        let g = grid(12, 1);
        for _ in 0..100 {
            let f = Field::new(g, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let h = Field::new(g, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let lhs = inner(&discrete_laplacian(&f), &h);
            let rhs = inner(&f, &discrete_laplacian(&h));
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
            let total: f64 = discrete_laplacian(&f).values().iter().sum();
            assert!(total.abs() <= 1e-9 * 144.0 * f.sup_norm());
        }
    }

    #[test]
    fn semigroup_commutes_with_laplacian() {
        let g = grid(16, 1);
        let f = project_fn(|x| (2.0 * std::f64::consts::PI * x).cos() + x * x, g);
        let t = 0.05;
        let a = heat_semigroup(&discrete_laplacian(&f), t);
        let b = discrete_laplacian(&heat_semigroup(&f, t));
        let scale = a.sup_norm().max(b.sup_norm()).max(1.0);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn unit_step_basis_norm() {
        let g = grid(9, 3);
        let n = 9.0f64;
        let mut v = Field::zeros(g);
        v.values_mut()[4] = n.sqrt();
        let (sup, l2) = norms(&v);
        assert!((sup - 3.0).abs() < 1e-12);
        assert!((l2 - 1.0).abs() < 1e-12);
        assert_eq!(norms(&Field::zeros(g)), (0.0, 0.0));
        let c = Field::constant(g, -2.5);
        let (sup, l2) = norms(&c);
        assert!((sup - 2.5).abs() < 1e-12 && (l2 - 2.5).abs() < 1e-12);
    }

    #[test]
    fn macro_weights_examples() {
        // a ≡ 1 on N=8: each site gets 1/8, summing to 1 over all sites.
        let g = grid(8, 2);
        let w1 = macro_weights(&[1.0], g, 1, WeightKind::A).unwrap();
        let w2 = macro_weights(&[1.0], g, 2, WeightKind::A).unwrap();
        let total: f64 = w1.iter().chain(&w2).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for w in w1.iter().chain(&w2) {
            assert!((w - 0.125).abs() < 1e-14);
        }
        // b ≡ 1: every entry exactly 1.
        let b = macro_weights(&[1.0], g, 1, WeightKind::B).unwrap();
        assert!(b.iter().all(|&x| (x - 1.0).abs() < 1e-14));
        // a(x) = 2x on N=2, single macrosite: (1/4, 3/4).
        let g2 = grid(2, 1);
        let w = macro_weights(&[0.0, 2.0], g2, 1, WeightKind::A).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-14 && (w[1] - 0.75).abs() < 1e-14);
    }
}
