//! TOML run configuration.
//!
//! Keys are walked by hand so that every error names the full dotted key
//! and unknown keys are rejected before any computation starts.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::darcy::Force;
use crate::error::{Error, Result};
use crate::geometry::{build_perforated_mesh, rasterize_cell, Layout, ObstacleSpec};
use crate::saddle::SolverOptions;

/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "PERMLAB_OUTPUT_DIR";

#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Period for single `darcy` / `fine` runs.
    pub eps: Option<f64>,
    pub n_per_cell: usize,
    pub output_dir: PathBuf,
    pub threads: usize,
    pub obstacles: Vec<ObstacleSpec>,
    pub layout: Layout,
    pub force: Force,
    pub solver: SolverOptions,
    pub sweep_eps: Vec<f64>,
    /// Hex SHA-256 of the configuration text.
    pub hash: String,
}

fn err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{path}`: {msg}"))
}

struct Section<'a> {
    path: String,
    table: &'a Table,
}

impl<'a> Section<'a> {
    fn new(path: &str, table: &'a Table, allowed: &[&str]) -> Result<Self> {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(err(&Self::join(path, key), "unknown key"));
            }
        }
        Ok(Self { path: path.to_string(), table })
    }

    fn join(path: &str, key: &str) -> String {
        if path.is_empty() {
            key.to_string()
        } else {
            format!("{path}.{key}")
        }
    }

    fn key(&self, key: &str) -> String {
        Self::join(&self.path, key)
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.get(key)
    }

    fn require(&self, key: &str) -> Result<&'a Value> {
        self.get(key).ok_or_else(|| err(&self.key(key), "missing required key"))
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| as_float(v, &self.key(key))).transpose()
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(_) => Err(err(&self.key(key), "expected a non-negative integer")),
        }
    }

    fn string(&self, key: &str) -> Result<Option<&'a str>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(err(&self.key(key), "expected a string")),
        }
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => {
                a.iter().enumerate().map(|(i, v)| as_float(v, &format!("{}[{i}]", self.key(key)))).collect::<Result<_>>().map(Some)
            }
            Some(_) => Err(err(&self.key(key), "expected an array of numbers")),
        }
    }

    fn point(&self, key: &str) -> Result<[f64; 2]> {
        let v = self.floats(key)?.ok_or_else(|| err(&self.key(key), "missing required key"))?;
        <[f64; 2]>::try_from(v).map_err(|_| err(&self.key(key), "expected two numbers"))
    }

    fn table(&self, key: &str) -> Result<Option<&'a Table>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(t)),
            Some(_) => Err(err(&self.key(key), "expected a table")),
        }
    }
}

fn as_float(v: &Value, path: &str) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(err(path, "expected a number")),
    }
}

fn parse_obstacle(path: &str, t: &Table) -> Result<ObstacleSpec> {
    let s = Section::new(path, t, &["kind", "center", "side", "radius", "vertices"])?;
    let kind = s.string("kind")?.ok_or_else(|| err(&s.key("kind"), "missing required key"))?;
    let spec = match kind {
        "square" => ObstacleSpec::AxisSquare {
            center: s.point("center")?,
            side: s.float("side")?.ok_or_else(|| err(&s.key("side"), "missing required key"))?,
        },
        "disk" => ObstacleSpec::Disk {
            center: s.point("center")?,
            radius: s.float("radius")?.ok_or_else(|| err(&s.key("radius"), "missing required key"))?,
        },
        "polygon" => {
            let key = s.key("vertices");
            let Some(Value::Array(vs)) = s.get("vertices") else {
                return Err(err(&key, "expected an array of [x, y] pairs"));
            };
            let vertices = vs
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let p = format!("{key}[{i}]");
                    match v {
                        Value::Array(xy) if xy.len() == 2 => Ok([as_float(&xy[0], &p)?, as_float(&xy[1], &p)?]),
                        _ => Err(err(&p, "expected [x, y]")),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            ObstacleSpec::Polygon { vertices }
        }
        other => return Err(err(&s.key("kind"), format!("unknown obstacle kind `{other}` (square, disk, polygon)"))),
    };
    spec.validate().map_err(|e| err(path, e))?;
    Ok(spec)
}

fn parse_layout(t: Option<&Table>, num_obstacles: usize) -> Result<Layout> {
    let Some(t) = t else {
        return Ok(Layout::whole(0));
    };
    let s = Section::new("layout", t, &["split_axis", "split_value", "micro_ids"])?;
    let ids = match s.get("micro_ids") {
        None => None,
        Some(Value::Array(a)) => Some(
            a.iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::Integer(k) if *k >= 0 => Ok(*k as usize),
                    _ => Err(err(&format!("layout.micro_ids[{i}]"), "expected a non-negative integer")),
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        Some(_) => return Err(err("layout.micro_ids", "expected an array of integers")),
    };
    let layout = match s.usize("split_axis")? {
        None => {
            if s.get("split_value").is_some() {
                return Err(err("layout.split_axis", "missing required key (split_value given)"));
            }
            let ids = ids.unwrap_or_else(|| vec![0]);
            if ids.len() != 1 {
                return Err(err("layout.micro_ids", "a whole-domain layout takes exactly one id"));
            }
            Layout::whole(ids[0])
        }
        Some(axis) => {
            if !(axis == 1 || axis == 2) {
                return Err(err("layout.split_axis", "expected 1 or 2"));
            }
            let value = s.float("split_value")?.ok_or_else(|| err("layout.split_value", "missing required key"))?;
            let ids = ids.unwrap_or_else(|| vec![0, 1.min(num_obstacles.saturating_sub(1))]);
            if ids.len() != 2 {
                return Err(err("layout.micro_ids", "a split layout takes exactly two ids [below, above]"));
            }
            Layout::half_split(axis - 1, value, ids[0], ids[1])
        }
    };
    layout.validate(num_obstacles).map_err(|e| err("layout", e))?;
    Ok(layout)
}

fn parse_force(t: Option<&Table>) -> Result<Force> {
    let Some(t) = t else {
        return Ok(Force::SinPiX2 { amplitude: 1.0 });
    };
    let s = Section::new("force", t, &["kind", "value", "amplitude"])?;
    match s.string("kind")?.ok_or_else(|| err("force.kind", "missing required key"))? {
        "sin_pi_x2" => Ok(Force::SinPiX2 { amplitude: s.float("amplitude")?.unwrap_or(1.0) }),
        "constant" => Ok(Force::Constant(s.point("value")?)),
        "zero" => Ok(Force::Zero),
        other => Err(err("force.kind", format!("unknown force `{other}` (sin_pi_x2, constant, zero)"))),
    }
}

fn check_eps(path: &str, eps: f64) -> Result<()> {
    let inv = 1.0 / eps;
    if !(eps > 0.0 && eps <= 1.0) || (inv - inv.round()).abs() > 1e-9 * inv {
        return Err(err(path, format!("{eps} is not the reciprocal of a positive integer")));
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let s = Section::new(
            "",
            &root,
            &["eps", "n_per_cell", "output_dir", "threads", "obstacle", "layout", "force", "solver", "sweep"],
        )?;

        let obstacles = match s.require("obstacle")? {
            Value::Table(t) => vec![parse_obstacle("obstacle", t)?],
            Value::Array(a) if !a.is_empty() => a
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::Table(t) => parse_obstacle(&format!("obstacle[{i}]"), t),
                    _ => Err(err(&format!("obstacle[{i}]"), "expected a table")),
                })
                .collect::<Result<_>>()?,
            _ => return Err(err("obstacle", "expected a table or a non-empty array of tables")),
        };
        let layout = parse_layout(s.table("layout")?, obstacles.len())?;
        let force = parse_force(s.table("force")?)?;

        let mut solver = SolverOptions::default();
        if let Some(t) = s.table("solver")? {
            let sv = Section::new("solver", t, &["tol", "max_iter"])?;
            if let Some(tol) = sv.float("tol")? {
                if !(tol > 0.0) {
                    return Err(err("solver.tol", "must be positive"));
                }
                solver.tol = tol;
            }
            if let Some(m) = sv.usize("max_iter")? {
                solver.max_iter = m;
            }
        }
        let sweep_eps = match s.table("sweep")? {
            None => Vec::new(),
            Some(t) => {
                let sw = Section::new("sweep", t, &["eps"])?;
                let list = sw.floats("eps")?.ok_or_else(|| err("sweep.eps", "missing required key"))?;
                for (i, e) in list.iter().enumerate() {
                    check_eps(&format!("sweep.eps[{i}]"), *e)?;
                }
                list
            }
        };
        let eps = s.float("eps")?;
        if let Some(e) = eps {
            check_eps("eps", e)?;
        }
        let n_per_cell = s.usize("n_per_cell")?.unwrap_or(16);
        if n_per_cell < 8 {
            return Err(err("n_per_cell", "must be at least 8"));
        }
        let threads = s.usize("threads")?.unwrap_or(1).max(1);
        let mut output_dir = PathBuf::from(s.string("output_dir")?.unwrap_or("permlab_out"));
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                output_dir = PathBuf::from(dir);
            }
        }
        Ok(Self {
            eps,
            n_per_cell,
            output_dir,
            threads,
            obstacles,
            layout,
            force,
            solver,
            sweep_eps,
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    /// Rasterises every obstacle and builds every requested fine mesh, so
    /// geometry problems surface before any solve.
    pub fn validate_geometry(&self) -> Result<()> {
        for (i, o) in self.obstacles.iter().enumerate() {
            rasterize_cell(o, self.n_per_cell).map_err(|e| err(&format!("obstacle[{i}]"), e))?;
        }
        for (key, e) in self.eps.iter().map(|e| ("eps".to_string(), *e)).chain(
            self.sweep_eps.iter().enumerate().map(|(i, e)| (format!("sweep.eps[{i}]"), *e)),
        ) {
            build_perforated_mesh(&self.layout, &self.obstacles, e, self.n_per_cell).map_err(|x| err(&key, x))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
