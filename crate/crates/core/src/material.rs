//! Material data: quadratic elastic form, external potential, traction,
//! kinetic co-energy, and numerical validation of the model constants.

use crate::error::{Error, Result};
use crate::mesh::{Marker, Mesh};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYMMETRY_TOL: f64 = 1e-12;

/// Coercive quadratic elastic energy density e(xi) = xi . Q xi on the
/// stacked argument xi = (vec grad_u, nu, vec grad_nu) of dimension
/// d^2 + k + k*d. Matrix blocks are row-major: (grad_u)_{ij} = d u_i / d x_j
/// sits at index i*d + j.
#[derive(Debug, Clone)]
pub struct ElasticForm {
    dim: usize,
    desc_dim: usize,
    q: DMatrix<f64>,
    lambda: f64,
    big_lambda: f64,
}

impl ElasticForm {
    pub fn new(dim: usize, desc_dim: usize, q: DMatrix<f64>) -> Result<ElasticForm> {
        let n = dim * dim + desc_dim + desc_dim * dim;
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::Dimension(format!(
                "elastic matrix must be {n}x{n} for d = {dim}, k = {desc_dim}, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        let asym = (&q - q.transpose()).norm();
        if asym > SYMMETRY_TOL * (1.0 + q.norm()) {
            return Err(Error::Material(format!(
                "elastic matrix is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        let eig = q.clone().symmetric_eigenvalues();
        let lambda = eig.min();
        let big_lambda = eig.max();
        Ok(ElasticForm {
            dim,
            desc_dim,
            q,
            lambda,
            big_lambda,
        })
    }

    /// Isotropic-style convenience: Q = c * I.
    pub fn scaled_identity(dim: usize, desc_dim: usize, c: f64) -> ElasticForm {
        let n = dim * dim + desc_dim + desc_dim * dim;
        ElasticForm::new(dim, desc_dim, DMatrix::identity(n, n) * c)
            .expect("scaled identity is symmetric")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn desc_dim(&self) -> usize {
        self.desc_dim
    }

    /// Dimension of the stacked argument.
    pub fn xi_len(&self) -> usize {
        self.dim * self.dim + self.desc_dim + self.desc_dim * self.dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Smallest eigenvalue (coercivity constant).
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Largest eigenvalue (continuity constant).
    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }

    pub fn pack_xi(
        &self,
        grad_u: &DMatrix<f64>,
        nu: &DVector<f64>,
        grad_nu: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        let (d, k) = (self.dim, self.desc_dim);
        if grad_u.nrows() != d || grad_u.ncols() != d {
            return Err(Error::Dimension("grad_u must be d x d".into()));
        }
        if nu.len() != k {
            return Err(Error::Dimension("nu must have length k".into()));
        }
        if grad_nu.nrows() != k || grad_nu.ncols() != d {
            return Err(Error::Dimension("grad_nu must be k x d".into()));
        }
        let mut xi = DVector::zeros(self.xi_len());
        for i in 0..d {
            for j in 0..d {
                xi[i * d + j] = grad_u[(i, j)];
            }
        }
        for p in 0..k {
            xi[d * d + p] = nu[p];
        }
        for p in 0..k {
            for j in 0..d {
                xi[d * d + k + p * d + j] = grad_nu[(p, j)];
            }
        }
        Ok(xi)
    }

    pub fn value(&self, xi: &DVector<f64>) -> f64 {
        (xi.transpose() * &self.q * xi)[(0, 0)]
    }
}

/// Gradient of e with respect to the three blocks of its argument:
/// the blocks of 2 Q xi, reshaped back to (d x d, k, k x d).
pub fn elastic_partials(
    e: &ElasticForm,
    grad_u: &DMatrix<f64>,
    nu: &DVector<f64>,
    grad_nu: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let (d, k) = (e.dim, e.desc_dim);
    let xi = e.pack_xi(grad_u, nu, grad_nu)?;
    let g = 2.0 * &e.q * xi;
    let mut d_f = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            d_f[(i, j)] = g[i * d + j];
        }
    }
    let d_nu = DVector::from_fn(k, |p, _| g[d * d + p]);
    let mut d_n = DMatrix::zeros(k, d);
    for p in 0..k {
        for j in 0..d {
            d_n[(p, j)] = g[d * d + k + p * d + j];
        }
    }
    Ok((d_f, d_nu, d_n))
}

/// External potential density w(u, nu) = 1/2 z . W z + g . z + w0 on the
/// stacked z = (u, nu).
#[derive(Debug, Clone)]
pub struct ExternalPotential {
    dim: usize,
    desc_dim: usize,
    w: DMatrix<f64>,
    g: DVector<f64>,
    w0: f64,
}

impl ExternalPotential {
    pub fn new(
        dim: usize,
        desc_dim: usize,
        w: DMatrix<f64>,
        g: DVector<f64>,
        w0: f64,
    ) -> Result<ExternalPotential> {
        let n = dim + desc_dim;
        if w.nrows() != n || w.ncols() != n || g.len() != n {
            return Err(Error::Dimension(format!(
                "external potential needs a {n}x{n} matrix and length-{n} vector"
            )));
        }
        let asym = (&w - w.transpose()).norm();
        if asym > SYMMETRY_TOL * (1.0 + w.norm()) {
            return Err(Error::Material("external potential matrix is not symmetric".into()));
        }
        Ok(ExternalPotential {
            dim,
            desc_dim,
            w,
            g,
            w0,
        })
    }

    pub fn zero(dim: usize, desc_dim: usize) -> ExternalPotential {
        let n = dim + desc_dim;
        ExternalPotential::new(dim, desc_dim, DMatrix::zeros(n, n), DVector::zeros(n), 0.0)
            .expect("zero potential is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn desc_dim(&self) -> usize {
        self.desc_dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn offset(&self) -> f64 {
        self.w0
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        0.5 * (z.transpose() * &self.w * z)[(0, 0)] + self.g.dot(z) + self.w0
    }

    pub fn grad(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.w * z + &self.g
    }

    /// Growth constant: |grad w(z)| <= xi1 (1 + |u| + |nu|).
    pub fn xi1(&self) -> f64 {
        let spectral = self
            .w
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |m, &l| m.max(l.abs()));
        spectral.max(self.g.norm())
    }
}

/// Constant traction covector per boundary facet, nonzero only on facets
/// carrying the `traction` marker.
#[derive(Debug, Clone)]
pub struct TractionField {
    values: Vec<DVector<f64>>,
}

impl TractionField {
    pub fn zero(mesh: &Mesh) -> TractionField {
        TractionField {
            values: vec![DVector::zeros(mesh.dim()); mesh.boundary().len()],
        }
    }

    /// `entries` pairs a boundary-facet index with its covector.
    pub fn new(mesh: &Mesh, entries: &[(usize, Vec<f64>)]) -> Result<TractionField> {
        let mut field = TractionField::zero(mesh);
        for (facet, t) in entries {
            let f = mesh
                .boundary()
                .get(*facet)
                .ok_or_else(|| Error::Material(format!("no boundary facet {facet}")))?;
            if f.marker != Marker::Traction {
                return Err(Error::Material(format!(
                    "facet {facet} is marked {}, not traction",
                    f.marker.as_str()
                )));
            }
            if t.len() != mesh.dim() {
                return Err(Error::Dimension("traction covector must have length d".into()));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Material("non-finite traction value".into()));
            }
            field.values[*facet] = DVector::from_column_slice(t);
        }
        Ok(field)
    }

    pub fn on_facet(&self, facet: usize) -> &DVector<f64> {
        &self.values[facet]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm() == 0.0)
    }
}

/// Parametric non-quadratic co-energy family
///
///   chi(nu, zeta) = 1/2 base |zeta|^2 + eps cos(wave sum(nu)) s(zeta),
///   s(zeta) = |zeta|^2 / (1 + |zeta|^2),
///
/// smooth, with chi(nu, 0) = 0 and chi >= 0 whenever base >= 2 eps. The
/// zeta-Hessian lies between (base - eps/2) I and (base + 2 eps) I, so the
/// declared convexity and boundedness constants can be chosen honestly.
#[derive(Debug, Clone)]
pub struct GeneralChi {
    pub base: f64,
    pub eps: f64,
    pub wave: f64,
    /// Declared convexity constant of the zeta-Hessian.
    pub gamma: f64,
    /// Declared bound on the full Hessian norm.
    pub xi: f64,
}

impl GeneralChi {
    fn phase(&self, nu: &DVector<f64>) -> f64 {
        self.wave * nu.sum()
    }

    pub fn value(&self, nu: &DVector<f64>, zeta: &DVector<f64>) -> f64 {
        let r = zeta.norm_squared();
        0.5 * self.base * r + self.eps * self.phase(nu).cos() * r / (1.0 + r)
    }

    pub fn d_nu(&self, nu: &DVector<f64>, zeta: &DVector<f64>) -> DVector<f64> {
        let r = zeta.norm_squared();
        let s = r / (1.0 + r);
        let c = -self.eps * self.wave * self.phase(nu).sin() * s;
        DVector::from_element(nu.len(), c)
    }

    pub fn d_zeta(&self, nu: &DVector<f64>, zeta: &DVector<f64>) -> DVector<f64> {
        let r = zeta.norm_squared();
        let ds = 2.0 / (1.0 + r).powi(2);
        zeta * (self.base + self.eps * self.phase(nu).cos() * ds)
    }
}

/// Kinetic co-energy of the morphological descriptor.
#[derive(Debug, Clone)]
pub enum ChiModel {
    /// chi = 1/2 rho_bar |nu_dot|^2.
    ScalarQuadratic { rho_bar: f64 },
    /// chi = 1/2 Omega nu_dot . nu_dot with Omega symmetric positive definite.
    MatrixQuadratic { omega: DMatrix<f64> },
    General(GeneralChi),
}

impl ChiModel {
    pub fn matrix_quadratic(omega: DMatrix<f64>) -> Result<ChiModel> {
        if omega.nrows() != omega.ncols() {
            return Err(Error::Dimension("inertia matrix must be square".into()));
        }
        let asym = (&omega - omega.transpose()).norm();
        if asym > SYMMETRY_TOL * (1.0 + omega.norm()) {
            return Err(Error::Material("inertia matrix is not symmetric".into()));
        }
        Ok(ChiModel::MatrixQuadratic { omega })
    }

    pub fn is_scalar_quadratic(&self) -> bool {
        matches!(self, ChiModel::ScalarQuadratic { .. })
    }

    pub fn is_quadratic(&self) -> bool {
        !matches!(self, ChiModel::General(_))
    }

    /// Scalar inertia density, when the variant has one.
    pub fn rho_bar(&self) -> Option<f64> {
        match self {
            ChiModel::ScalarQuadratic { rho_bar } => Some(*rho_bar),
            _ => None,
        }
    }

    /// Convexity constant of the zeta-Hessian (declared for General).
    pub fn gamma(&self) -> f64 {
        match self {
            ChiModel::ScalarQuadratic { rho_bar } => *rho_bar,
            ChiModel::MatrixQuadratic { omega } => {
                omega.clone().symmetric_eigenvalues().min()
            }
            ChiModel::General(g) => g.gamma,
        }
    }

    /// Bound on the full Hessian norm (declared for General).
    pub fn xi(&self) -> f64 {
        match self {
            ChiModel::ScalarQuadratic { rho_bar } => *rho_bar,
            ChiModel::MatrixQuadratic { omega } => {
                omega.clone().symmetric_eigenvalues().max()
            }
            ChiModel::General(g) => g.xi,
        }
    }
}

/// (chi, d chi / d nu, d chi / d nu_dot) at (nu, zeta).
pub fn chi_partials(
    chi: &ChiModel,
    nu: &DVector<f64>,
    zeta: &DVector<f64>,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    if nu.len() != zeta.len() {
        return Err(Error::Dimension("nu and nu_dot must have equal length".into()));
    }
    let k = nu.len();
    Ok(match chi {
        ChiModel::ScalarQuadratic { rho_bar } => (
            0.5 * rho_bar * zeta.norm_squared(),
            DVector::zeros(k),
            zeta * *rho_bar,
        ),
        ChiModel::MatrixQuadratic { omega } => {
            if omega.nrows() != k {
                return Err(Error::Dimension(format!(
                    "inertia matrix is {}x{} but k = {k}",
                    omega.nrows(),
                    omega.ncols()
                )));
            }
            let oz = omega * zeta;
            (0.5 * zeta.dot(&oz), DVector::zeros(k), oz)
        }
        ChiModel::General(g) => (g.value(nu, zeta), g.d_nu(nu, zeta), g.d_zeta(nu, zeta)),
    })
}

/// Full material description of a run.
#[derive(Debug, Clone)]
pub struct Material {
    pub elastic: ElasticForm,
    pub external: ExternalPotential,
    pub traction: TractionField,
    /// Mass density (constant).
    pub rho: f64,
    pub chi: ChiModel,
    /// Dissipation density; eta >= 0 keeps the self-action dissipative.
    pub eta: f64,
}

impl Material {
    pub fn new(
        elastic: ElasticForm,
        external: ExternalPotential,
        traction: TractionField,
        rho: f64,
        chi: ChiModel,
        eta: f64,
    ) -> Result<Material> {
        if elastic.dim() != external.dim() || elastic.desc_dim() != external.desc_dim() {
            return Err(Error::Dimension(
                "elastic form and external potential disagree on (d, k)".into(),
            ));
        }
        if !(rho > 0.0) {
            return Err(Error::Material(format!("rho must be positive, got {rho}")));
        }
        if eta < 0.0 {
            return Err(Error::Material(format!("eta must be nonnegative, got {eta}")));
        }
        Ok(Material {
            elastic,
            external,
            traction,
            rho,
            chi,
            eta,
        })
    }

    pub fn dim(&self) -> usize {
        self.elastic.dim()
    }

    pub fn desc_dim(&self) -> usize {
        self.elastic.desc_dim()
    }

    /// Inertia density used for lumping; the identity-weight 1.0 is used for
    /// the matrix variant, whose Omega multiplies lumped volumes directly.
    pub fn rho_bar_density(&self) -> f64 {
        self.chi.rho_bar().unwrap_or(1.0)
    }
}

/// Sampling options for constants that are only observable pointwise.
#[derive(Debug, Clone, Copy)]
pub struct SamplingOptions {
    /// Half-width of the sampling box around the origin.
    pub box_half_width: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            box_half_width: 2.0,
            samples: 200,
            seed: 0,
        }
    }
}

/// Computed model constants with pass/fail flags.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub lambda: f64,
    pub big_lambda: f64,
    pub xi1: f64,
    pub gamma: f64,
    pub xi: f64,
    pub xi2: f64,
    /// Monotonicity window 2 gamma / (2 xi + gamma).
    pub t0: f64,
    /// Coercivity of the elastic form.
    pub coercive: bool,
    /// Gradient growth of the external potential, sampled.
    pub potential_growth: bool,
    /// Sampled Hessian bound |D^2 chi| <= xi.
    pub chi_hessian_bounded: bool,
    /// Sampled convexity of the zeta-Hessian >= gamma.
    pub chi_convex: bool,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.coercive && self.potential_growth && self.chi_hessian_bounded && self.chi_convex
    }
}

/// Finite-difference Hessian of chi at (nu, zeta), stacked ((nu, zeta) x
/// (nu, zeta)), via central differences of the analytic gradient.
fn chi_hessian_fd(chi: &ChiModel, nu: &DVector<f64>, zeta: &DVector<f64>, step: f64) -> DMatrix<f64> {
    let k = nu.len();
    let grad = |nu: &DVector<f64>, zeta: &DVector<f64>| -> DVector<f64> {
        let (_, dn, dz) = chi_partials(chi, nu, zeta).expect("dims fixed");
        let mut g = DVector::zeros(2 * k);
        g.rows_mut(0, k).copy_from(&dn);
        g.rows_mut(k, k).copy_from(&dz);
        g
    };
    let mut h = DMatrix::zeros(2 * k, 2 * k);
    for j in 0..2 * k {
        let mut np = nu.clone();
        let mut zp = zeta.clone();
        let mut nm = nu.clone();
        let mut zm = zeta.clone();
        if j < k {
            np[j] += step;
            nm[j] -= step;
        } else {
            zp[j - k] += step;
            zm[j - k] -= step;
        }
        let col = (grad(&np, &zp) - grad(&nm, &zm)) / (2.0 * step);
        h.set_column(j, &col);
    }
    // Symmetrize; FD noise breaks exact symmetry.
    0.5 * (h.clone() + h.transpose())
}

/// Computes the model constants (A1)-(A5 analogues) and growth certificate.
///
/// For the quadratic variants the constants are exact eigen-bounds; for the
/// general co-energy the declared constants are kept and verified by
/// sampling finite-difference Hessians over the declared box. `xi2` is the
/// smallest constant making both growth inequalities
///
///   gamma |zeta|^2 - xi2 (1 + |nu|^2) <= chi <= xi2 (1 + |nu|^2 + |zeta|^2)
///
/// hold at every sample (reported together with the Taylor-based bound).
pub fn validate_assumptions(material: &Material, opts: SamplingOptions) -> AssumptionReport {
    let k = material.desc_dim();
    let lambda = material.elastic.lambda();
    let big_lambda = material.elastic.big_lambda();
    let xi1 = material.external.xi1();
    let gamma = material.chi.gamma();
    let xi = material.chi.xi();
    let t0 = 2.0 * gamma / (2.0 * xi + gamma);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let b = opts.box_half_width;
    let draw = |rng: &mut ChaCha8Rng| DVector::from_fn(k, |_, _| rng.gen_range(-b..b));

    // Sampled gradient-growth certificate for the external potential.
    let mut potential_growth = true;
    let n_ext = material.dim() + k;
    for _ in 0..opts.samples {
        let z = DVector::from_fn(n_ext, |_, _| rng.gen_range(-b..b));
        let gn = material.external.grad(&z).norm();
        let u_norm = z.rows(0, material.dim()).norm();
        let nu_norm = z.rows(material.dim(), k).norm();
        if gn > xi1 * (1.0 + u_norm + nu_norm) + 1e-9 {
            potential_growth = false;
        }
    }

    // Sampled Hessian checks and growth certificate for chi.
    let mut chi_hessian_bounded = true;
    let mut chi_convex = true;
    let (mut c00, mut g00) = (0.0, 0.0);
    if let Ok((v, dn, dz)) = chi_partials(
        &material.chi,
        &DVector::zeros(k),
        &DVector::zeros(k),
    ) {
        c00 = v;
        g00 = (dn.norm_squared() + dz.norm_squared()).sqrt();
    }
    let mut xi2 = (c00 + g00).max(0.5 * g00 + 0.5 * xi);
    for _ in 0..opts.samples {
        let nu = draw(&mut rng);
        let zeta = draw(&mut rng);
        let h = chi_hessian_fd(&material.chi, &nu, &zeta, 1e-5);
        let eig_full = h.clone().symmetric_eigenvalues();
        let norm = eig_full.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        if norm > xi + 1e-6 {
            chi_hessian_bounded = false;
        }
        let hzz = h.view((k, k), (k, k)).into_owned();
        let min_zz = hzz.symmetric_eigenvalues().min();
        if min_zz < gamma - 1e-6 {
            chi_convex = false;
        }
        let (v, _, _) = chi_partials(&material.chi, &nu, &zeta).expect("dims fixed");
        let denom_u = 1.0 + nu.norm_squared() + zeta.norm_squared();
        xi2 = xi2.max(v / denom_u);
        let denom_l = 1.0 + nu.norm_squared();
        xi2 = xi2.max((gamma * zeta.norm_squared() - v) / denom_l);
    }

    AssumptionReport {
        lambda,
        big_lambda,
        xi1,
        gamma,
        xi,
        xi2,
        t0,
        coercive: lambda > 0.0,
        potential_growth,
        chi_hessian_bounded,
        chi_convex,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::sample;
    use approx::assert_relative_eq;

    fn fd_grad(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, step: f64) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| {
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += step;
            m[i] -= step;
            (f(&p) - f(&m)) / (2.0 * step)
        })
    }

    #[test]
    fn elastic_partials_at_origin_vanish() {
        let e = ElasticForm::scaled_identity(2, 1, 1.0);
        let (df, dn, dg) = elastic_partials(
            &e,
            &DMatrix::zeros(2, 2),
            &DVector::zeros(1),
            &DMatrix::zeros(1, 2),
        )
        .unwrap();
        assert_eq!(df.norm(), 0.0);
        assert_eq!(dn.norm(), 0.0);
        assert_eq!(dg.norm(), 0.0);
    }

    #[test]
    fn elastic_partials_identity_q() {
        let e = ElasticForm::scaled_identity(2, 1, 1.0);
        let (df, dn, dg) = elastic_partials(
            &e,
            &DMatrix::identity(2, 2),
            &DVector::zeros(1),
            &DMatrix::zeros(1, 2),
        )
        .unwrap();
        assert_relative_eq!(df[(0, 0)], 2.0);
        assert_relative_eq!(df[(1, 1)], 2.0);
        assert_relative_eq!(df[(0, 1)], 0.0);
        assert_eq!(dn.norm(), 0.0);
        assert_eq!(dg.norm(), 0.0);
    }

    #[test]
    fn elastic_partials_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (d, k) = (2, 2);
        let n = d * d + k + k * d;
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = 0.5 * (&a + a.transpose());
        let e = ElasticForm::new(d, k, q).unwrap();
        let xi = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let fd = fd_grad(|x| e.value(x), &xi, 1e-5);
        let gu = DMatrix::from_fn(d, d, |i, j| xi[i * d + j]);
        let nu = DVector::from_fn(k, |p, _| xi[d * d + p]);
        let gn = DMatrix::from_fn(k, d, |p, j| xi[d * d + k + p * d + j]);
        let (df, dn, dg) = elastic_partials(&e, &gu, &nu, &gn).unwrap();
        for i in 0..d {
            for j in 0..d {
                assert_relative_eq!(df[(i, j)], fd[i * d + j], epsilon = 1e-6);
            }
        }
        for p in 0..k {
            assert_relative_eq!(dn[p], fd[d * d + p], epsilon = 1e-6);
            for j in 0..d {
                assert_relative_eq!(dg[(p, j)], fd[d * d + k + p * d + j], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn asymmetric_q_rejected() {
        let mut q = DMatrix::identity(7, 7);
        q[(0, 1)] = 0.5;
        assert!(ElasticForm::new(2, 1, q).is_err());
    }

    #[test]
    fn external_potential_growth_constant() {
        let w = ExternalPotential::new(
            2,
            1,
            DMatrix::identity(3, 3) * 2.0,
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            0.0,
        )
        .unwrap();
        assert_relative_eq!(w.xi1(), 2.0);
        let z = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let fd = fd_grad(|x| w.value(x), &z, 1e-5);
        assert!((w.grad(&z) - fd).norm() < 1e-8);
    }

    #[test]
    fn chi_scalar_quadratic() {
        let chi = ChiModel::ScalarQuadratic { rho_bar: 2.0 };
        let nu = DVector::zeros(2);
        let zeta = DVector::from_vec(vec![1.0, 0.0]);
        let (v, dn, dz) = chi_partials(&chi, &nu, &zeta).unwrap();
        assert_relative_eq!(v, 1.0);
        assert_eq!(dn.norm(), 0.0);
        assert_relative_eq!(dz[0], 2.0);
        assert_relative_eq!(dz[1], 0.0);
    }

    #[test]
    fn chi_matrix_quadratic() {
        let chi = ChiModel::matrix_quadratic(DMatrix::from_diagonal(
            &DVector::from_vec(vec![1.0, 4.0]),
        ))
        .unwrap();
        let (v, _, dz) = chi_partials(&chi, &DVector::zeros(2), &DVector::from_vec(vec![1.0, 1.0]))
            .unwrap();
        assert_relative_eq!(v, 2.5);
        assert_relative_eq!(dz[0], 1.0);
        assert_relative_eq!(dz[1], 4.0);
        assert_relative_eq!(chi.gamma(), 1.0);
        assert_relative_eq!(chi.xi(), 4.0);
    }

    #[test]
    fn chi_general_partials_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let chi = ChiModel::General(GeneralChi {
            base: 1.5,
            eps: 0.2,
            wave: 1.0,
            gamma: 1.0,
            xi: 2.0,
        });
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let nu = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let zeta = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let (_, dn, dz) = chi_partials(&chi, &nu, &zeta).unwrap();
            let fd_n = fd_grad(
                |x| chi_partials(&chi, x, &zeta).unwrap().0,
                &nu,
                1e-5,
            );
            let fd_z = fd_grad(
                |x| chi_partials(&chi, &nu, x).unwrap().0,
                &zeta,
                1e-5,
            );
            assert!((dn - fd_n).norm() < 1e-6);
            assert!((dz - fd_z).norm() < 1e-6);
        }
    }

    fn quadratic_material() -> Material {
        let mesh = sample::unit_square(1, vec![]);
        Material::new(
            ElasticForm::scaled_identity(2, 1, 2.0),
            ExternalPotential::zero(2, 1),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::ScalarQuadratic { rho_bar: 1.0 },
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn validate_quadratic_constants() {
        let report = validate_assumptions(&quadratic_material(), SamplingOptions::default());
        assert_relative_eq!(report.lambda, 2.0);
        assert_relative_eq!(report.big_lambda, 2.0);
        assert_relative_eq!(report.gamma, 1.0);
        assert_relative_eq!(report.xi, 1.0);
        assert_relative_eq!(report.t0, 2.0 / 3.0, epsilon = 1e-15);
        assert!(report.all_pass());
    }

    #[test]
    fn validate_flags_noncoercive_elastic() {
        let mesh = sample::unit_square(1, vec![]);
        let mut q = DMatrix::identity(7, 7);
        q[(0, 0)] = 0.0;
        let material = Material::new(
            ElasticForm::new(2, 1, q).unwrap(),
            ExternalPotential::zero(2, 1),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::ScalarQuadratic { rho_bar: 1.0 },
            0.0,
        )
        .unwrap();
        let report = validate_assumptions(&material, SamplingOptions::default());
        assert!(!report.coercive);
        assert!(!report.all_pass());
    }

    #[test]
    fn validate_flags_nonconvex_chi() {
        let mesh = sample::unit_square(1, vec![]);
        let material = Material::new(
            ElasticForm::scaled_identity(2, 1, 1.0),
            ExternalPotential::zero(2, 1),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::General(GeneralChi {
                base: 0.2,
                eps: 1.0,
                wave: 1.0,
                gamma: 0.5,
                xi: 3.0,
            }),
            0.0,
        )
        .unwrap();
        let report = validate_assumptions(&material, SamplingOptions::default());
        assert!(!report.chi_convex);
    }

    #[test]
    fn general_chi_declared_constants_verified() {
        let mesh = sample::unit_square(1, vec![]);
        let material = Material::new(
            ElasticForm::scaled_identity(2, 1, 1.0),
            ExternalPotential::zero(2, 1),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::General(GeneralChi {
                base: 1.5,
                eps: 0.2,
                wave: 1.0,
                gamma: 1.0,
                xi: 2.0,
            }),
            0.0,
        )
        .unwrap();
        let report = validate_assumptions(&material, SamplingOptions::default());
        assert!(report.chi_convex, "zeta-Hessian lower bound {:?}", report);
        assert!(report.chi_hessian_bounded);
        assert_relative_eq!(report.t0, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn monotonicity_and_lipschitz_samples() {
        use rand::{Rng, SeedableRng};
        let chi = ChiModel::General(GeneralChi {
            base: 1.5,
            eps: 0.2,
            wave: 1.0,
            gamma: 1.0,
            xi: 2.0,
        });
        let gamma = chi.gamma();
        let xi = chi.xi();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let nu = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let z1 = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let z2 = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let d1 = chi_partials(&chi, &nu, &z1).unwrap().2;
            let d2 = chi_partials(&chi, &nu, &z2).unwrap().2;
            let diff = &z1 - &z2;
            assert!(
                (d1.clone() - d2).dot(&diff) >= gamma * diff.norm_squared() - 1e-9,
                "monotonicity violated"
            );
            // Lipschitz in nu at fixed rate.
            let nu2 = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let e1 = chi_partials(&chi, &nu, &z1).unwrap().2;
            let e2 = chi_partials(&chi, &nu2, &z1).unwrap().2;
            assert!((e1 - e2).norm() <= xi * (&nu - &nu2).norm() + 1e-9);
            let f1 = chi_partials(&chi, &nu, &z1).unwrap().1;
            let f2 = chi_partials(&chi, &nu, &z2).unwrap().1;
            assert!((f1 - f2).norm() <= xi * (&z1 - &z2).norm() + 1e-9);
        }
    }

    #[test]
    fn growth_bounds_with_reported_xi2() {
        use rand::{Rng, SeedableRng};
        let mesh = sample::unit_square(2, vec![]);
        let material = Material::new(
            ElasticForm::scaled_identity(2, 2, 1.0),
            ExternalPotential::zero(2, 2),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::General(GeneralChi {
                base: 1.5,
                eps: 0.2,
                wave: 1.0,
                gamma: 1.0,
                xi: 2.0,
            }),
            0.0,
        )
        .unwrap();
        let opts = SamplingOptions::default();
        let report = validate_assumptions(&material, opts);
        let gamma = report.gamma;
        let xi2 = report.xi2;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
        // Re-sampling from the same box must respect the certificate.
        for _ in 0..200 {
            let nu = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let zeta = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let (v, _, _) = chi_partials(&material.chi, &nu, &zeta).unwrap();
            assert!(v <= xi2 * (1.0 + nu.norm_squared() + zeta.norm_squared()) + 1e-9);
            assert!(
                gamma * zeta.norm_squared() - xi2 * (1.0 + nu.norm_squared()) <= v + 1e-9
            );
        }
    }

    #[test]
    fn traction_requires_marked_facet() {
        use crate::mesh::Marker;
        let mesh = sample::unit_square(1, vec![
            (vec![0, 1], Marker::Traction),
            (vec![2, 3], Marker::FixedU),
        ]);
        assert!(TractionField::new(&mesh, &[(0, vec![1.0, 0.0])]).is_ok());
        assert!(TractionField::new(&mesh, &[(1, vec![1.0, 0.0])]).is_err());
        assert!(TractionField::new(&mesh, &[(0, vec![f64::NAN, 0.0])]).is_err());
    }

    #[test]
    fn negative_eta_rejected() {
        let mesh = sample::unit_square(1, vec![]);
        assert!(Material::new(
            ElasticForm::scaled_identity(2, 1, 1.0),
            ExternalPotential::zero(2, 1),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::ScalarQuadratic { rho_bar: 1.0 },
            -0.1,
        )
        .is_err());
    }
}
