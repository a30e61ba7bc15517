//! Simplicial tessellation of a polyhedral domain with piecewise-linear
//! shape functions, boundary markers, and lumped nodal coefficients.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Boundary-facet marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    /// Traction data may be applied on this facet.
    Traction,
    /// Homogeneous Dirichlet condition on the displacement.
    FixedU,
    /// Homogeneous Dirichlet condition on the morphological descriptor.
    FixedNu,
    /// No condition.
    Free,
}

impl Marker {
    pub fn parse(tok: &str) -> Option<Marker> {
        match tok {
            "traction" => Some(Marker::Traction),
            "fixed_u" => Some(Marker::FixedU),
            "fixed_nu" => Some(Marker::FixedNu),
            "free" => Some(Marker::Free),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Marker::Traction => "traction",
            Marker::FixedU => "fixed_u",
            Marker::FixedNu => "fixed_nu",
            Marker::Free => "free",
        }
    }
}

/// A boundary facet: `d` node indices plus a marker. The owning element is
/// resolved during validation.
#[derive(Debug, Clone)]
pub struct BoundaryFacet {
    pub nodes: Vec<usize>,
    pub marker: Marker,
    /// Index of the unique element this facet is a face of.
    pub element: usize,
    /// (d-1)-dimensional measure (length in 2d, area in 3d).
    pub measure: f64,
}

/// Simplicial mesh in dimension `d` (2 or 3) carrying the descriptor
/// dimension `k` of the run.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    desc_dim: usize,
    /// Node coordinates, `n_nodes * dim`, node-major.
    nodes: Vec<f64>,
    /// Element connectivity, `n_elements * (dim + 1)`.
    elements: Vec<usize>,
    boundary: Vec<BoundaryFacet>,
    /// Signed volume per element (validated positive).
    volumes: Vec<f64>,
    /// Constant shape-function gradients, per element: (d+1) rows of d
    /// entries each, in local-node order.
    gradients: Vec<f64>,
    fixed_u: Vec<bool>,
    fixed_nu: Vec<bool>,
    /// Elements containing each node.
    node_elements: Vec<Vec<usize>>,
}

impl Mesh {
    /// Builds and validates a mesh from raw parts.
    pub fn from_parts(
        dim: usize,
        desc_dim: usize,
        nodes: Vec<f64>,
        elements: Vec<usize>,
        boundary: Vec<(Vec<usize>, Marker)>,
    ) -> Result<Mesh> {
        if dim != 2 && dim != 3 {
            return Err(Error::MeshInvariant(format!("dim must be 2 or 3, got {dim}")));
        }
        if desc_dim < 1 {
            return Err(Error::MeshInvariant("descriptor dimension k must be >= 1".into()));
        }
        if nodes.len() % dim != 0 {
            return Err(Error::MeshInvariant("node coordinate count not divisible by dim".into()));
        }
        let n_nodes = nodes.len() / dim;
        let loc = dim + 1;
        if elements.len() % loc != 0 {
            return Err(Error::MeshInvariant("element index count not divisible by d+1".into()));
        }
        let n_elems = elements.len() / loc;
        for (i, &a) in elements.iter().enumerate() {
            if a >= n_nodes {
                return Err(Error::MeshInvariant(format!(
                    "element {} references node {} but only {} nodes exist",
                    i / loc,
                    a,
                    n_nodes
                )));
            }
        }

        let mut volumes = Vec::with_capacity(n_elems);
        let mut gradients = Vec::with_capacity(n_elems * loc * dim);
        for e in 0..n_elems {
            let conn = &elements[e * loc..(e + 1) * loc];
            let x0 = &nodes[conn[0] * dim..conn[0] * dim + dim];
            // Edge matrix E with columns x_i - x_0.
            let mut edge = DMatrix::<f64>::zeros(dim, dim);
            for j in 1..loc {
                let xj = &nodes[conn[j] * dim..conn[j] * dim + dim];
                for r in 0..dim {
                    edge[(r, j - 1)] = xj[r] - x0[r];
                }
            }
            let det = edge.determinant();
            let factorial = (1..=dim).product::<usize>() as f64;
            let vol = det / factorial;
            if !(vol > 0.0) {
                return Err(Error::MeshInvariant(format!(
                    "element {e} has non-positive signed volume {vol:.3e}"
                )));
            }
            volumes.push(vol);
            let inv = edge
                .try_inverse()
                .ok_or_else(|| Error::MeshInvariant(format!("element {e} is degenerate")))?;
            // Gradients of barycentric coordinates: rows of E^{-1} for local
            // nodes 1..d, and minus their sum for local node 0.
            let mut g0 = vec![0.0; dim];
            let mut rest = Vec::with_capacity(dim * dim);
            for j in 1..loc {
                for c in 0..dim {
                    let v = inv[(j - 1, c)];
                    g0[c] -= v;
                    rest.push(v);
                }
            }
            gradients.extend_from_slice(&g0);
            gradients.extend_from_slice(&rest);
        }

        let mut node_elements = vec![Vec::new(); n_nodes];
        for e in 0..n_elems {
            for &a in &elements[e * loc..(e + 1) * loc] {
                node_elements[a].push(e);
            }
        }

        // Resolve boundary facets against elements and validate markers.
        let mut facets = Vec::with_capacity(boundary.len());
        let mut fixed_u = vec![false; n_nodes];
        let mut fixed_nu = vec![false; n_nodes];
        let mut seen: Vec<(Vec<usize>, Marker)> = Vec::new();
        for (fnodes, marker) in boundary {
            if fnodes.len() != dim {
                return Err(Error::MeshInvariant(format!(
                    "boundary facet must have {dim} nodes, got {}",
                    fnodes.len()
                )));
            }
            for &a in &fnodes {
                if a >= n_nodes {
                    return Err(Error::MeshInvariant(format!(
                        "boundary facet references node {a} but only {n_nodes} nodes exist"
                    )));
                }
            }
            let mut key = fnodes.clone();
            key.sort_unstable();
            let owners: Vec<usize> = node_elements[key[0]]
                .iter()
                .copied()
                .filter(|&e| {
                    let conn = &elements[e * loc..(e + 1) * loc];
                    key.iter().all(|a| conn.contains(a))
                })
                .collect();
            if owners.len() != 1 {
                return Err(Error::MeshInvariant(format!(
                    "boundary facet {key:?} belongs to {} elements, expected exactly 1",
                    owners.len()
                )));
            }
            for (other, m) in &seen {
                if *other == key {
                    let clash = matches!(
                        (m, marker),
                        (Marker::FixedU, Marker::Traction) | (Marker::Traction, Marker::FixedU)
                    ) || *m == marker;
                    if clash {
                        return Err(Error::MeshInvariant(format!(
                            "facet {key:?} carries overlapping markers {} and {}",
                            m.as_str(),
                            marker.as_str()
                        )));
                    }
                }
            }
            seen.push((key.clone(), marker));
            let measure = facet_measure(dim, &nodes, &fnodes);
            match marker {
                Marker::FixedU => fnodes.iter().for_each(|&a| fixed_u[a] = true),
                Marker::FixedNu => fnodes.iter().for_each(|&a| fixed_nu[a] = true),
                _ => {}
            }
            facets.push(BoundaryFacet {
                nodes: fnodes,
                marker,
                element: owners[0],
                measure,
            });
        }

        Ok(Mesh {
            dim,
            desc_dim,
            nodes,
            elements,
            boundary: facets,
            volumes,
            gradients,
            fixed_u,
            fixed_nu,
            node_elements,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Descriptor dimension k.
    pub fn desc_dim(&self) -> usize {
        self.desc_dim
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.volumes.len()
    }

    pub fn node(&self, a: usize) -> &[f64] {
        &self.nodes[a * self.dim..(a + 1) * self.dim]
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        let loc = self.dim + 1;
        &self.elements[e * loc..(e + 1) * loc]
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.volumes[e]
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    pub fn boundary(&self) -> &[BoundaryFacet] {
        &self.boundary
    }

    pub fn is_fixed_u(&self, a: usize) -> bool {
        self.fixed_u[a]
    }

    pub fn is_fixed_nu(&self, a: usize) -> bool {
        self.fixed_nu[a]
    }

    pub fn elements_of_node(&self, a: usize) -> &[usize] {
        &self.node_elements[a]
    }

    /// Gradient of the shape function of local node `local` on element `e`.
    pub fn local_gradient(&self, e: usize, local: usize) -> &[f64] {
        let loc = self.dim + 1;
        let base = (e * loc + local) * self.dim;
        &self.gradients[base..base + self.dim]
    }

    /// Constant gradient of the shape function of (global) node `a`
    /// restricted to element `e`. Errors if `a` is not a vertex of `e`.
    pub fn shape_gradient(&self, e: usize, a: usize) -> Result<DVector<f64>> {
        let local = self
            .element_nodes(e)
            .iter()
            .position(|&b| b == a)
            .ok_or_else(|| {
                Error::MeshInvariant(format!("node {a} is not a vertex of element {e}"))
            })?;
        Ok(DVector::from_column_slice(self.local_gradient(e, local)))
    }

    /// Values of all shape functions of element `e` at point `x` (affine
    /// extension; exact barycentric coordinates inside the element).
    pub fn shape_values(&self, e: usize, x: &[f64]) -> Vec<f64> {
        let conn = self.element_nodes(e);
        let x0 = self.node(conn[0]);
        let mut vals = vec![0.0; conn.len()];
        let mut lam0 = 1.0;
        for j in 1..conn.len() {
            let g = self.local_gradient(e, j);
            let mut lj = 0.0;
            for c in 0..self.dim {
                lj += g[c] * (x[c] - x0[c]);
            }
            vals[j] = lj;
            lam0 -= lj;
        }
        vals[0] = lam0;
        vals
    }

    /// Barycenter of element `e`.
    pub fn barycenter(&self, e: usize) -> Vec<f64> {
        let conn = self.element_nodes(e);
        let mut c = vec![0.0; self.dim];
        for &a in conn {
            let x = self.node(a);
            for r in 0..self.dim {
                c[r] += x[r] / conn.len() as f64;
            }
        }
        c
    }

    /// Smallest constant c such that sup_x |grad u| <= c |u| for every
    /// piecewise-linear nodal field u: the max over elements of the spectral
    /// norm of the matrix stacking the element's shape gradients.
    pub fn grad_bound_constant(&self) -> f64 {
        let loc = self.dim + 1;
        let mut c = 0.0f64;
        for e in 0..self.n_elements() {
            let mut g = DMatrix::<f64>::zeros(loc, self.dim);
            for j in 0..loc {
                let gj = self.local_gradient(e, j);
                for r in 0..self.dim {
                    g[(j, r)] = gj[r];
                }
            }
            let sigma = g.singular_values()[0];
            c = c.max(sigma);
        }
        c
    }
}

fn facet_measure(dim: usize, nodes: &[f64], fnodes: &[usize]) -> f64 {
    let x0 = &nodes[fnodes[0] * dim..fnodes[0] * dim + dim];
    match dim {
        2 => {
            let x1 = &nodes[fnodes[1] * 2..fnodes[1] * 2 + 2];
            ((x1[0] - x0[0]).powi(2) + (x1[1] - x0[1]).powi(2)).sqrt()
        }
        3 => {
            let x1 = &nodes[fnodes[1] * 3..fnodes[1] * 3 + 3];
            let x2 = &nodes[fnodes[2] * 3..fnodes[2] * 3 + 3];
            let a = [x1[0] - x0[0], x1[1] - x0[1], x1[2] - x0[2]];
            let b = [x2[0] - x0[0], x2[1] - x0[1], x2[2] - x0[2]];
            let cx = a[1] * b[2] - a[2] * b[1];
            let cy = a[2] * b[0] - a[0] * b[2];
            let cz = a[0] * b[1] - a[1] * b[0];
            0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
        }
        _ => unreachable!(),
    }
}

/// Parses the plain-text mesh format:
///
/// ```text
/// dim 2 1
/// nodes 4
/// 0.0 0.0
/// ...
/// elements 2
/// 0 1 2
/// ...
/// boundary 2
/// 0 1 traction
/// ...
/// ```
///
/// Whitespace-separated; `#` starts a comment.
pub fn load_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let parse_err = |line: usize, msg: &str| Error::MeshParse {
        line,
        msg: msg.to_string(),
    };

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty mesh file"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 || toks[0] != "dim" {
        return Err(parse_err(hline, "expected header `dim d k`"));
    }
    let dim: usize = toks[1]
        .parse()
        .map_err(|_| parse_err(hline, "bad spatial dimension"))?;
    let desc_dim: usize = toks[2]
        .parse()
        .map_err(|_| parse_err(hline, "bad descriptor dimension"))?;

    let mut nodes = Vec::new();
    let mut elements = Vec::new();
    let mut boundary = Vec::new();

    let expect_block = |line: usize, l: &str, name: &str| -> Result<usize> {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 2 || t[0] != name {
            return Err(parse_err(line, &format!("expected block header `{name} <count>`")));
        }
        t[1].parse()
            .map_err(|_| parse_err(line, &format!("bad {name} count")))
    };

    let (nline, nhdr) = lines.next().ok_or_else(|| parse_err(hline, "missing `nodes` block"))?;
    let n_nodes = expect_block(nline, nhdr, "nodes")?;
    for _ in 0..n_nodes {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(nline, "truncated nodes block"))?;
        let coords: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(ln, "bad node coordinate"))?;
        if coords.len() != dim {
            return Err(parse_err(ln, &format!("expected {dim} coordinates")));
        }
        nodes.extend_from_slice(&coords);
    }

    let (eline, ehdr) = lines.next().ok_or_else(|| parse_err(nline, "missing `elements` block"))?;
    let n_elems = expect_block(eline, ehdr, "elements")?;
    for _ in 0..n_elems {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(eline, "truncated elements block"))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(ln, "bad node index"))?;
        if idx.len() != dim + 1 {
            return Err(parse_err(ln, &format!("expected {} node indices", dim + 1)));
        }
        elements.extend_from_slice(&idx);
    }

    if let Some((bline, bhdr)) = lines.next() {
        let n_bnd = expect_block(bline, bhdr, "boundary")?;
        for _ in 0..n_bnd {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(bline, "truncated boundary block"))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != dim + 1 {
                return Err(parse_err(ln, &format!("expected {dim} indices plus marker")));
            }
            let idx: Vec<usize> = toks[..dim]
                .iter()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(ln, "bad node index"))?;
            let marker = Marker::parse(toks[dim])
                .ok_or_else(|| parse_err(ln, "unknown marker (traction|fixed_u|fixed_nu|free)"))?;
            boundary.push((idx, marker));
        }
        if let Some((ln, _)) = lines.next() {
            return Err(parse_err(ln, "trailing content after boundary block"));
        }
    }

    Mesh::from_parts(dim, desc_dim, nodes, elements, boundary)
}

/// Lumped nodal coefficients: vertex (row-sum) lumping on simplices,
/// `m_{K,a} = rho |K| / (d+1)` and likewise for the substructural inertia
/// and the dissipation pairing.
#[derive(Debug, Clone)]
pub struct NodalCoefficients {
    pub rho: f64,
    pub rho_bar: f64,
    pub eta: f64,
    /// Lumped volume per node: w_a = sum_{K ∋ a} |K| / (d+1).
    pub volume: Vec<f64>,
    /// Per-element share |K| / (d+1) (identical for every vertex of K).
    pub element_share: Vec<f64>,
}

impl NodalCoefficients {
    pub fn mass(&self, a: usize) -> f64 {
        self.rho * self.volume[a]
    }

    pub fn rho_bar_nodal(&self, a: usize) -> f64 {
        self.rho_bar * self.volume[a]
    }

    pub fn eta_nodal(&self, a: usize) -> f64 {
        self.eta * self.volume[a]
    }

    /// m_{K,a} for a vertex of element `e`.
    pub fn mass_elem(&self, e: usize) -> f64 {
        self.rho * self.element_share[e]
    }

    pub fn rho_bar_elem(&self, e: usize) -> f64 {
        self.rho_bar * self.element_share[e]
    }
}

/// Computes the lumped nodal coefficients for constant densities.
pub fn lumped_coefficients(
    mesh: &Mesh,
    rho: f64,
    rho_bar: f64,
    eta: f64,
) -> Result<NodalCoefficients> {
    if !(rho > 0.0) || !(rho_bar > 0.0) {
        return Err(Error::Material(format!(
            "densities must be positive (rho = {rho}, rho_bar = {rho_bar})"
        )));
    }
    if eta < 0.0 {
        return Err(Error::Material(format!("eta must be nonnegative, got {eta}")));
    }
    let loc = (mesh.dim() + 1) as f64;
    let mut volume = vec![0.0; mesh.n_nodes()];
    let mut element_share = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let share = mesh.volume(e) / loc;
        element_share.push(share);
        for &a in mesh.element_nodes(e) {
            volume[a] += share;
        }
    }
    Ok(NodalCoefficients {
        rho,
        rho_bar,
        eta,
        volume,
        element_share,
    })
}

/// Convenience constructors for the small meshes used throughout the tests
/// and the bundled configurations.
pub mod sample {
    use super::*;

    /// The reference triangle (0,0), (1,0), (0,1), no boundary markers.
    pub fn reference_triangle(k: usize) -> Mesh {
        Mesh::from_parts(
            2,
            k,
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
            vec![0, 1, 2],
            vec![],
        )
        .expect("reference triangle is valid")
    }

    /// Unit square split into two triangles along the main diagonal.
    pub fn unit_square(k: usize, boundary: Vec<(Vec<usize>, Marker)>) -> Mesh {
        Mesh::from_parts(
            2,
            k,
            vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0],
            vec![0, 1, 2, 0, 2, 3],
            boundary,
        )
        .expect("unit square is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const REF_TRIANGLE: &str = "\
# reference simplex
dim 2 1
nodes 3
0.0 0.0
1.0 0.0
0.0 1.0
elements 1
0 1 2
";

    const UNIT_SQUARE: &str = "\
dim 2 1
nodes 4
0.0 0.0
1.0 0.0
1.0 1.0
0.0 1.0
elements 2
0 1 2
0 2 3
boundary 2
0 1 traction
2 3 fixed_u
";

    #[test]
    fn reference_triangle_area() {
        let mesh = load_mesh(REF_TRIANGLE).unwrap();
        assert_eq!(mesh.n_elements(), 1);
        assert_relative_eq!(mesh.volume(0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn unit_square_totals() {
        let mesh = load_mesh(UNIT_SQUARE).unwrap();
        assert_eq!(mesh.n_nodes(), 4);
        assert_eq!(mesh.n_elements(), 2);
        assert_relative_eq!(mesh.total_volume(), 1.0, epsilon = 1e-15);
        assert!(mesh.is_fixed_u(2) && mesh.is_fixed_u(3));
        assert!(!mesh.is_fixed_u(0));
    }

    #[test]
    fn dangling_index_rejected() {
        let bad = "dim 2 1\nnodes 4\n0 0\n1 0\n1 1\n0 1\nelements 1\n0 1 99\n";
        let err = load_mesh(bad).unwrap_err();
        assert!(matches!(err, Error::MeshInvariant(_)), "{err}");
    }

    #[test]
    fn overlapping_markers_rejected() {
        let bad = "dim 2 1\nnodes 3\n0 0\n1 0\n0 1\nelements 1\n0 1 2\nboundary 2\n0 1 traction\n1 0 fixed_u\n";
        assert!(load_mesh(bad).is_err());
    }

    #[test]
    fn negative_volume_rejected() {
        let bad = "dim 2 1\nnodes 3\n0 0\n1 0\n0 1\nelements 1\n0 2 1\n";
        assert!(load_mesh(bad).is_err());
    }

    #[test]
    fn shape_gradients_reference_triangle() {
        let mesh = sample::reference_triangle(1);
        let g0 = mesh.shape_gradient(0, 0).unwrap();
        assert_relative_eq!(g0[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(g0[1], -1.0, epsilon = 1e-15);
        let g1 = mesh.shape_gradient(0, 1).unwrap();
        assert_relative_eq!(g1[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(g1[1], 0.0, epsilon = 1e-15);
        assert!(mesh.shape_gradient(0, 7).is_err());
    }

    #[test]
    fn gradients_sum_to_zero_per_element() {
        let mesh = sample::unit_square(1, vec![]);
        for e in 0..mesh.n_elements() {
            let mut sum = vec![0.0; 2];
            for &a in mesh.element_nodes(e) {
                let g = mesh.shape_gradient(e, a).unwrap();
                sum[0] += g[0];
                sum[1] += g[1];
            }
            assert!(sum[0].abs() < 1e-12 && sum[1].abs() < 1e-12);
        }
    }

    #[test]
    fn partition_of_unity_at_random_points() {
        let mesh = sample::unit_square(2, vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for e in 0..mesh.n_elements() {
            for _ in 0..20 {
                // Random barycentric point mapped into the element.
                let mut lam = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
                let s: f64 = lam.iter().sum();
                lam.iter_mut().for_each(|l| *l /= s);
                let conn = mesh.element_nodes(e);
                let mut x = [0.0; 2];
                for (j, &a) in conn.iter().enumerate() {
                    let p = mesh.node(a);
                    x[0] += lam[j] * p[0];
                    x[1] += lam[j] * p[1];
                }
                let vals = mesh.shape_values(e, &x);
                let total: f64 = vals.iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
                for (j, v) in vals.iter().enumerate() {
                    assert!((v - lam[j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn lumped_masses() {
        let tri = sample::reference_triangle(1);
        let c = lumped_coefficients(&tri, 3.0, 1.0, 2.0).unwrap();
        for a in 0..3 {
            assert_relative_eq!(c.mass(a), 0.5, epsilon = 1e-15);
            assert_relative_eq!(c.eta_nodal(a), 1.0 / 3.0, epsilon = 1e-15);
        }

        let sq = sample::unit_square(1, vec![]);
        let c = lumped_coefficients(&sq, 1.0, 1.0, 0.0).unwrap();
        let total: f64 = (0..sq.n_nodes()).map(|a| c.mass(a)).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);

        assert!(lumped_coefficients(&sq, -1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn grad_bound_constant_reference_triangle() {
        // Independent route: the stacked gradient matrix G has rows
        // (-1,-1), (1,0), (0,1); G^T G = [[2,1],[1,2]] with eigenvalues 3
        // and 1, so the spectral norm is sqrt(3).
        let mesh = sample::reference_triangle(1);
        assert_relative_eq!(mesh.grad_bound_constant(), 3.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn grad_bound_scales_inversely() {
        let s = 2.5;
        let scaled = Mesh::from_parts(
            2,
            1,
            vec![0.0, 0.0, s, 0.0, 0.0, s],
            vec![0, 1, 2],
            vec![],
        )
        .unwrap();
        let reference = sample::reference_triangle(1);
        assert_relative_eq!(
            scaled.grad_bound_constant(),
            reference.grad_bound_constant() / s,
            epsilon = 1e-12
        );
    }

    #[test]
    fn grad_bound_max_over_elements() {
        // Two congruent disjoint triangles: same constant as one.
        let two = Mesh::from_parts(
            2,
            1,
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 5.0, 0.0, 6.0, 0.0, 5.0, 1.0],
            vec![0, 1, 2, 3, 4, 5],
            vec![],
        )
        .unwrap();
        let one = sample::reference_triangle(1);
        assert_relative_eq!(
            two.grad_bound_constant(),
            one.grad_bound_constant(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn grad_bound_certificate() {
        let mesh = sample::unit_square(1, vec![]);
        let c = mesh.grad_bound_constant();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            // Random scalar nodal field.
            let u: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            for e in 0..mesh.n_elements() {
                let mut gx = 0.0;
                let mut gy = 0.0;
                for &a in mesh.element_nodes(e) {
                    let g = mesh.shape_gradient(e, a).unwrap();
                    gx += u[a] * g[0];
                    gy += u[a] * g[1];
                }
                let gnorm = (gx * gx + gy * gy).sqrt();
                assert!(gnorm <= c * norm + 1e-12);
            }
        }
    }

    #[test]
    fn mesh_3d_tetrahedron() {
        let text = "dim 3 1\nnodes 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nelements 1\n0 1 2 3\nboundary 1\n0 1 2 traction\n";
        let mesh = load_mesh(text).unwrap();
        assert_relative_eq!(mesh.volume(0), 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(mesh.boundary()[0].measure, 0.5, epsilon = 1e-15);
    }
}
