//! Run configuration: INI-style sections with key=value lines, chosen so
//! any language can parse or emit it. A run is fully reproducible from one
//! file: mesh path, material, time-set policy, integrator, initial data,
//! and a single seed feeding all randomness.

use crate::error::{Error, Result};
use crate::material::{
    ChiModel, ElasticForm, ExternalPotential, GeneralChi, Material, TractionField,
};
use crate::mesh::{self, Mesh};
use crate::oracle;
use crate::state::InitialData;
use crate::sync::{Quadrature, SyncOptions};
use crate::timeset::{Mode, Policy};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Symmetric matrix description.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSpec {
    Zero,
    /// Identity times a constant.
    Iso(f64),
    Diag(Vec<f64>),
    /// Lower-triangular rows; completed by symmetry.
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn build(&self, n: usize, key: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Zero => Ok(DMatrix::zeros(n, n)),
            MatrixSpec::Iso(c) => Ok(DMatrix::identity(n, n) * *c),
            MatrixSpec::Diag(v) => {
                if v.len() != n {
                    return Err(Error::Config {
                        key: key.into(),
                        msg: format!("diagonal needs {n} entries, got {}", v.len()),
                    });
                }
                Ok(DMatrix::from_diagonal(&DVector::from_column_slice(v)))
            }
            MatrixSpec::Rows(rows) => {
                if rows.len() != n || rows.iter().enumerate().any(|(i, r)| r.len() != i + 1) {
                    return Err(Error::Config {
                        key: key.into(),
                        msg: format!("expected {n} lower-triangular rows (row i has i+1 entries)"),
                    });
                }
                let mut m = DMatrix::zeros(n, n);
                for (i, row) in rows.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChiSpec {
    Scalar(f64),
    MatrixDiag(Vec<f64>),
    General {
        base: f64,
        eps: f64,
        wave: f64,
        gamma: f64,
        xi: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSpec {
    pub rho: f64,
    pub eta: f64,
    pub elastic: MatrixSpec,
    pub w: MatrixSpec,
    /// Linear external term; empty = zero.
    pub g: Vec<f64>,
    pub w0: f64,
    pub chi: ChiSpec,
    /// (boundary facet index, traction vector).
    pub traction: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Uniform,
    Jittered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimesetSpec {
    pub policy: PolicyKind,
    pub n: usize,
    pub max_ratio: f64,
    pub mode: Mode,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorChoice {
    Avi,
    Sync,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeOverride {
    pub node: usize,
    pub channel: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec {
    /// Constant fields; empty vectors mean zero.
    pub u: Vec<f64>,
    pub nu: Vec<f64>,
    pub u_dot: Vec<f64>,
    pub nu_dot: Vec<f64>,
    pub overrides: Vec<NodeOverride>,
    /// Rate amplitude of the lowest eigenmode, added on top.
    pub excite: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh_path: PathBuf,
    pub output_dir: PathBuf,
    pub material: MaterialSpec,
    pub timeset: TimesetSpec,
    pub sync: SyncOptions,
    pub integrator: IntegratorChoice,
    pub t0: f64,
    pub tf: f64,
    pub seed: u64,
    pub initial: InitialSpec,
}

fn parse_floats(s: &str, key: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Config {
                key: key.into(),
                msg: format!("expected numbers, got '{t}'"),
            })
        })
        .collect()
}

struct Section<'a> {
    name: &'a str,
    keys: BTreeMap<String, String>,
}

impl<'a> Section<'a> {
    fn take(&mut self, key: &str) -> Option<String> {
        self.keys.remove(key)
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn require(&mut self, key: &str) -> Result<String> {
        self.take(key).ok_or_else(|| Error::Config {
            key: self.path(key),
            msg: "missing key".into(),
        })
    }

    fn parse_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config {
                key: self.path(key),
                msg: format!("cannot parse '{v}'"),
            }),
        }
    }
}

fn split_sections(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>> {
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find(['#', ';']) {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
            out.entry(current.clone()).or_default();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            key: format!("line {}", lineno + 1),
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        if current.is_empty() {
            return Err(Error::Config {
                key: format!("line {}", lineno + 1),
                msg: "key before any [section]".into(),
            });
        }
        out.get_mut(&current)
            .expect("section entry exists")
            .insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn matrix_spec(section: &mut Section, key: &str) -> Result<MatrixSpec> {
    let head = match section.take(key) {
        None => return Ok(MatrixSpec::Zero),
        Some(h) => h,
    };
    let mut toks = head.split_whitespace();
    let kind = toks.next().unwrap_or("");
    let rest: Vec<&str> = toks.collect();
    let path = section.path(key);
    match kind {
        "zero" => Ok(MatrixSpec::Zero),
        "iso" => {
            let c = rest.join(" ").parse().map_err(|_| Error::Config {
                key: path,
                msg: "iso needs one scale".into(),
            })?;
            Ok(MatrixSpec::Iso(c))
        }
        "diag" => Ok(MatrixSpec::Diag(parse_floats(&rest.join(" "), &path)?)),
        "rows" => {
            let mut rows = Vec::new();
            while let Some(row) = section.take(&format!("{key}.{}", rows.len())) {
                rows.push(parse_floats(&row, &format!("{path}.{}", rows.len()))?);
            }
            Ok(MatrixSpec::Rows(rows))
        }
        other => Err(Error::Config {
            key: path,
            msg: format!("unknown matrix kind '{other}' (zero | iso | diag | rows)"),
        }),
    }
}

pub fn parse(text: &str) -> Result<RunConfig> {
    let mut raw = split_sections(text)?;
    let mut section = |name: &'static str| -> Section<'static> {
        Section {
            name,
            keys: raw.remove(name).unwrap_or_default(),
        }
    };

    let mut paths = section("paths");
    let mesh_path = PathBuf::from(paths.require("mesh")?);
    let output_dir = PathBuf::from(paths.take("output").unwrap_or_else(|| "out".into()));

    let mut mat = section("material");
    let chi_line = mat.take("chi").unwrap_or_else(|| "scalar 1.0".into());
    let chi = {
        let mut toks = chi_line.split_whitespace();
        let kind = toks.next().unwrap_or("");
        let nums: Vec<&str> = toks.collect();
        let path = mat.path("chi");
        let vals = parse_floats(&nums.join(" "), &path)?;
        match (kind, vals.len()) {
            ("scalar", 1) => ChiSpec::Scalar(vals[0]),
            ("matrix", n) if n > 0 => ChiSpec::MatrixDiag(vals),
            ("general", 5) => ChiSpec::General {
                base: vals[0],
                eps: vals[1],
                wave: vals[2],
                gamma: vals[3],
                xi: vals[4],
            },
            _ => {
                return Err(Error::Config {
                    key: path,
                    msg: "expected 'scalar rb' | 'matrix d1 ... dk' | 'general base eps wave gamma xi'"
                        .into(),
                })
            }
        }
    };
    let elastic = matrix_spec(&mut mat, "elastic")?;
    let w = matrix_spec(&mut mat, "w")?;
    let g = match mat.take("g") {
        Some(s) => parse_floats(&s, &mat.path("g"))?,
        None => Vec::new(),
    };
    let mut traction = Vec::new();
    let traction_keys: Vec<String> = mat
        .keys
        .keys()
        .filter(|k| k.starts_with("traction."))
        .cloned()
        .collect();
    for k in traction_keys {
        let idx: usize = k["traction.".len()..].parse().map_err(|_| Error::Config {
            key: mat.path(&k),
            msg: "traction keys look like traction.<facet index>".into(),
        })?;
        let vals = parse_floats(&mat.take(&k).expect("listed key"), &mat.path(&k))?;
        traction.push((idx, vals));
    }
    let material = MaterialSpec {
        rho: mat.parse_or("rho", 1.0)?,
        eta: mat.parse_or("eta", 0.0)?,
        elastic,
        w,
        g,
        w0: mat.parse_or("w0", 0.0)?,
        chi,
        traction,
    };

    let mut run = section("run");
    let integrator = match run.require("integrator")?.as_str() {
        "avi" => IntegratorChoice::Avi,
        "sync" => IntegratorChoice::Sync,
        other => {
            return Err(Error::Config {
                key: run.path("integrator"),
                msg: format!("unknown integrator '{other}' (avi | sync)"),
            })
        }
    };
    let t0: f64 = run.parse_or("t0", 0.0)?;
    let tf: f64 = run.parse_or("tf", 1.0)?;
    if !(tf > t0) {
        return Err(Error::Config {
            key: run.path("tf"),
            msg: format!("interval ({t0}, {tf}) is empty"),
        });
    }
    let seed: u64 = run.parse_or("seed", 0)?;

    let mut ts = section("timeset");
    let policy = match ts.take("policy").as_deref().unwrap_or("uniform") {
        "uniform" => PolicyKind::Uniform,
        "jittered" => PolicyKind::Jittered,
        other => {
            return Err(Error::Config {
                key: ts.path("policy"),
                msg: format!("unknown policy '{other}' (uniform | jittered)"),
            })
        }
    };
    let mode = match ts.take("mode").as_deref().unwrap_or("relaxed") {
        "strict" => Mode::Strict,
        "relaxed" => Mode::Relaxed,
        other => {
            return Err(Error::Config {
                key: ts.path("mode"),
                msg: format!("unknown mode '{other}' (strict | relaxed)"),
            })
        }
    };
    let timeset = TimesetSpec {
        policy,
        n: ts.parse_or("n", 100)?,
        max_ratio: ts.parse_or("max_ratio", 2.0)?,
        mode,
        seed: match ts.take("seed") {
            None => None,
            Some(v) => Some(v.parse().map_err(|_| Error::Config {
                key: ts.path("seed"),
                msg: format!("cannot parse '{v}'"),
            })?),
        },
    };
    if timeset.n == 0 {
        return Err(Error::Config {
            key: "timeset.n".into(),
            msg: "need at least one step".into(),
        });
    }

    let mut sy = section("sync");
    let quadrature = match sy.take("quadrature").as_deref().unwrap_or("vertex") {
        "vertex" => Quadrature::Vertex,
        "gauss" => Quadrature::Gauss,
        other => {
            return Err(Error::Config {
                key: sy.path("quadrature"),
                msg: format!("unknown quadrature '{other}' (vertex | gauss)"),
            })
        }
    };
    let sync = SyncOptions {
        quadrature,
        tol: sy.parse_or("tol", 1e-12)?,
        max_iters: sy.parse_or("max_iters", 50)?,
    };

    let mut ini = section("initial");
    let field = |s: &mut Section, key: &str| -> Result<Vec<f64>> {
        match s.take(key) {
            Some(v) => parse_floats(&v, &s.path(key)),
            None => Ok(Vec::new()),
        }
    };
    let u = field(&mut ini, "u")?;
    let nu = field(&mut ini, "nu")?;
    let u_dot = field(&mut ini, "u_dot")?;
    let nu_dot = field(&mut ini, "nu_dot")?;
    let excite = match ini.take("excite") {
        None => None,
        Some(v) => Some(v.parse().map_err(|_| Error::Config {
            key: ini.path("excite"),
            msg: format!("cannot parse '{v}'"),
        })?),
    };
    let mut overrides = Vec::new();
    let node_keys: Vec<String> = ini
        .keys
        .keys()
        .filter(|k| k.starts_with("node."))
        .cloned()
        .collect();
    for k in node_keys {
        let parts: Vec<&str> = k.splitn(3, '.').collect();
        let (node, channel) = match (parts.get(1), parts.get(2)) {
            (Some(n), Some(c)) if matches!(*c, "u" | "nu" | "u_dot" | "nu_dot") => {
                let node = n.parse::<usize>().map_err(|_| Error::Config {
                    key: ini.path(&k),
                    msg: "node overrides look like node.<index>.<channel>".into(),
                })?;
                (node, c.to_string())
            }
            _ => {
                return Err(Error::Config {
                    key: ini.path(&k),
                    msg: "node overrides look like node.<index>.<u|nu|u_dot|nu_dot>".into(),
                })
            }
        };
        let values = parse_floats(&ini.take(&k).expect("listed key"), &ini.path(&k))?;
        overrides.push(NodeOverride {
            node,
            channel,
            values,
        });
    }
    overrides.sort_by(|a, b| (a.node, &a.channel).cmp(&(b.node, &b.channel)));

    // AVI is only defined for the scalar quadratic kinetic co-energy.
    if integrator == IntegratorChoice::Avi && !matches!(material.chi, ChiSpec::Scalar(_)) {
        return Err(Error::Config {
            key: "run.integrator".into(),
            msg: "avi requires chi = scalar; use the sync integrator".into(),
        });
    }

    for s in [&paths, &mat, &run, &ts, &sy, &ini] {
        if let Some(k) = s.keys.keys().next() {
            return Err(Error::Config {
                key: s.path(k),
                msg: "unknown key".into(),
            });
        }
    }
    for (name, keys) in &raw {
        if let Some(k) = keys.keys().next() {
            return Err(Error::Config {
                key: format!("{name}.{k}"),
                msg: "unknown key or section".into(),
            });
        }
    }

    Ok(RunConfig {
        mesh_path,
        output_dir,
        material,
        timeset,
        sync,
        integrator,
        t0,
        tf,
        seed,
        initial: InitialSpec {
            u,
            nu,
            u_dot,
            nu_dot,
            overrides,
            excite,
        },
    })
}

fn write_matrix(out: &mut String, key: &str, m: &MatrixSpec) {
    match m {
        MatrixSpec::Zero => out.push_str(&format!("{key} = zero\n")),
        MatrixSpec::Iso(c) => out.push_str(&format!("{key} = iso {c}\n")),
        MatrixSpec::Diag(v) => out.push_str(&format!("{key} = diag {}\n", join(v))),
        MatrixSpec::Rows(rows) => {
            out.push_str(&format!("{key} = rows\n"));
            for (i, r) in rows.iter().enumerate() {
                out.push_str(&format!("{key}.{i} = {}\n", join(r)));
            }
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl RunConfig {
    /// Serializes so that parse() round-trips to an equivalent config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[paths]\n");
        s.push_str(&format!("mesh = {}\n", self.mesh_path.display()));
        s.push_str(&format!("output = {}\n\n", self.output_dir.display()));

        s.push_str("[material]\n");
        s.push_str(&format!("rho = {}\n", self.material.rho));
        s.push_str(&format!("eta = {}\n", self.material.eta));
        write_matrix(&mut s, "elastic", &self.material.elastic);
        write_matrix(&mut s, "w", &self.material.w);
        if !self.material.g.is_empty() {
            s.push_str(&format!("g = {}\n", join(&self.material.g)));
        }
        s.push_str(&format!("w0 = {}\n", self.material.w0));
        match &self.material.chi {
            ChiSpec::Scalar(rb) => s.push_str(&format!("chi = scalar {rb}\n")),
            ChiSpec::MatrixDiag(d) => s.push_str(&format!("chi = matrix {}\n", join(d))),
            ChiSpec::General {
                base,
                eps,
                wave,
                gamma,
                xi,
            } => s.push_str(&format!("chi = general {base} {eps} {wave} {gamma} {xi}\n")),
        }
        for (idx, t) in &self.material.traction {
            s.push_str(&format!("traction.{idx} = {}\n", join(t)));
        }
        s.push('\n');

        s.push_str("[timeset]\n");
        s.push_str(&format!(
            "policy = {}\n",
            match self.timeset.policy {
                PolicyKind::Uniform => "uniform",
                PolicyKind::Jittered => "jittered",
            }
        ));
        s.push_str(&format!("n = {}\n", self.timeset.n));
        s.push_str(&format!("max_ratio = {}\n", self.timeset.max_ratio));
        s.push_str(&format!(
            "mode = {}\n",
            match self.timeset.mode {
                Mode::Strict => "strict",
                Mode::Relaxed => "relaxed",
            }
        ));
        if let Some(seed) = self.timeset.seed {
            s.push_str(&format!("seed = {seed}\n"));
        }
        s.push('\n');

        s.push_str("[sync]\n");
        s.push_str(&format!(
            "quadrature = {}\n",
            match self.sync.quadrature {
                Quadrature::Vertex => "vertex",
                Quadrature::Gauss => "gauss",
            }
        ));
        s.push_str(&format!("tol = {}\n", self.sync.tol));
        s.push_str(&format!("max_iters = {}\n\n", self.sync.max_iters));

        s.push_str("[run]\n");
        s.push_str(&format!(
            "integrator = {}\n",
            match self.integrator {
                IntegratorChoice::Avi => "avi",
                IntegratorChoice::Sync => "sync",
            }
        ));
        s.push_str(&format!("t0 = {}\n", self.t0));
        s.push_str(&format!("tf = {}\n", self.tf));
        s.push_str(&format!("seed = {}\n\n", self.seed));

        s.push_str("[initial]\n");
        for (key, v) in [
            ("u", &self.initial.u),
            ("nu", &self.initial.nu),
            ("u_dot", &self.initial.u_dot),
            ("nu_dot", &self.initial.nu_dot),
        ] {
            if !v.is_empty() {
                s.push_str(&format!("{key} = {}\n", join(v)));
            }
        }
        for ov in &self.initial.overrides {
            s.push_str(&format!("node.{}.{} = {}\n", ov.node, ov.channel, join(&ov.values)));
        }
        if let Some(a) = self.initial.excite {
            s.push_str(&format!("excite = {a}\n"));
        }
        s
    }

    /// Parses a config file; relative mesh paths resolve against its parent.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = parse(&text)?;
        if cfg.mesh_path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.mesh_path = dir.join(&cfg.mesh_path);
            }
        }
        Ok(cfg)
    }

    pub fn load_mesh(&self) -> Result<Mesh> {
        let text = std::fs::read_to_string(&self.mesh_path)?;
        mesh::load_mesh(&text)
    }

    pub fn build_material(&self, mesh: &Mesh) -> Result<Material> {
        let (d, k) = (mesh.dim(), mesh.desc_dim());
        let nq = d * d + k + k * d;
        let q = self.material.elastic.build(nq, "material.elastic")?;
        let elastic = ElasticForm::new(d, k, q)?;
        let nw = d + k;
        let w = self.material.w.build(nw, "material.w")?;
        let g = if self.material.g.is_empty() {
            DVector::zeros(nw)
        } else if self.material.g.len() == nw {
            DVector::from_column_slice(&self.material.g)
        } else {
            return Err(Error::Config {
                key: "material.g".into(),
                msg: format!("expected {nw} entries, got {}", self.material.g.len()),
            });
        };
        let external = ExternalPotential::new(d, k, w, g, self.material.w0)?;
        let traction = TractionField::new(mesh, &self.material.traction)?;
        let chi = match &self.material.chi {
            ChiSpec::Scalar(rb) => ChiModel::ScalarQuadratic { rho_bar: *rb },
            ChiSpec::MatrixDiag(diag) => {
                if diag.len() != k {
                    return Err(Error::Config {
                        key: "material.chi".into(),
                        msg: format!("matrix chi needs {k} diagonal entries"),
                    });
                }
                ChiModel::matrix_quadratic(DMatrix::from_diagonal(&DVector::from_column_slice(
                    diag,
                )))?
            }
            ChiSpec::General {
                base,
                eps,
                wave,
                gamma,
                xi,
            } => ChiModel::General(GeneralChi {
                base: *base,
                eps: *eps,
                wave: *wave,
                gamma: *gamma,
                xi: *xi,
            }),
        };
        Material::new(elastic, external, traction, self.material.rho, chi, self.material.eta)
    }

    pub fn build_initial(&self, mesh: &Mesh, material: &Material) -> Result<InitialData> {
        let (d, k) = (mesh.dim(), mesh.desc_dim());
        let pad = |v: &[f64], n: usize, key: &str| -> Result<Vec<f64>> {
            if v.is_empty() {
                Ok(vec![0.0; n])
            } else if v.len() == n {
                Ok(v.to_vec())
            } else {
                Err(Error::Config {
                    key: key.into(),
                    msg: format!("expected {n} entries, got {}", v.len()),
                })
            }
        };
        let u = pad(&self.initial.u, d, "initial.u")?;
        let nu = pad(&self.initial.nu, k, "initial.nu")?;
        let u_dot = pad(&self.initial.u_dot, d, "initial.u_dot")?;
        let nu_dot = pad(&self.initial.nu_dot, k, "initial.nu_dot")?;
        let mut init = InitialData::constant(mesh, &u, &nu, &u_dot, &nu_dot)?;
        for ov in &self.initial.overrides {
            if ov.node >= mesh.n_nodes() {
                return Err(Error::Config {
                    key: format!("initial.node.{}.{}", ov.node, ov.channel),
                    msg: format!("mesh has {} nodes", mesh.n_nodes()),
                });
            }
            let want = if ov.channel.starts_with('u') { d } else { k };
            if ov.values.len() != want {
                return Err(Error::Config {
                    key: format!("initial.node.{}.{}", ov.node, ov.channel),
                    msg: format!("expected {want} entries, got {}", ov.values.len()),
                });
            }
            let a = ov.node;
            let dst = match ov.channel.as_str() {
                "u" => &mut init.u0[a * d..(a + 1) * d],
                "u_dot" => &mut init.u_dot0[a * d..(a + 1) * d],
                "nu" => &mut init.nu0[a * k..(a + 1) * k],
                "nu_dot" => &mut init.nu_dot0[a * k..(a + 1) * k],
                _ => unreachable!("channel validated at parse"),
            };
            dst.copy_from_slice(&ov.values);
        }
        if let Some(amp) = self.initial.excite {
            if matches!(material.chi, ChiModel::General(_)) {
                return Err(Error::Config {
                    key: "initial.excite".into(),
                    msg: "modal excitation needs a quadratic kinetic co-energy".into(),
                });
            }
            let sys = oracle::assemble(mesh, material)?;
            let mode = oracle::lowest_mode(&sys)?;
            for a in 0..mesh.n_nodes() {
                for c in 0..d {
                    init.u_dot0[a * d + c] += amp * mode[oracle::u_dof(mesh, a, c)];
                }
                for c in 0..k {
                    init.nu_dot0[a * k + c] += amp * mode[oracle::nu_dof(mesh, a, c)];
                }
            }
        }
        Ok(init)
    }

    pub fn timeset_policy(&self) -> Policy {
        match self.timeset.policy {
            PolicyKind::Uniform => Policy::Uniform { n: self.timeset.n },
            PolicyKind::Jittered => Policy::Jittered {
                n: self.timeset.n,
                seed: self.timeset.seed.unwrap_or(self.seed),
                max_ratio: self.timeset.max_ratio,
            },
        }
    }
}
