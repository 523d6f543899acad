//! MAC staggered-grid calculus.
//!
//! Pressures and other scalars live at cell centres, velocity components on
//! the faces normal to them: component 0 (`u`) on vertical faces, component 1
//! (`v`) on horizontal faces. Cell `(i, j)` has centre `((i + 1/2) h, (j + 1/2) h)`
//! and all arrays are stored row-major with `i` running fastest.
//!
//! In a periodic direction there are as many faces as cells (face `i` is the
//! low face of cell `i`); in a wall direction there is one extra face and the
//! first and last faces lie on the wall.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    Wall,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacGrid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub bc: [Boundary; 2],
}

impl MacGrid {
    pub fn new(nx: usize, ny: usize, h: f64, bc: [Boundary; 2]) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!("empty grid {nx}x{ny}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("mesh size h = {h}")));
        }
        Ok(Self { nx, ny, h, bc })
    }

    /// Periodic `n x n` grid on the unit square.
    pub fn periodic(n: usize) -> Self {
        Self { nx: n, ny: n, h: 1.0 / n as f64, bc: [Boundary::Periodic; 2] }
    }

    /// `n x n` grid on the unit square with walls on all four sides.
    pub fn walled(n: usize) -> Self {
        Self { nx: n, ny: n, h: 1.0 / n as f64, bc: [Boundary::Wall; 2] }
    }

    #[inline]
    pub fn cells_along(&self, d: usize) -> usize {
        if d == 0 {
            self.nx
        } else {
            self.ny
        }
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Cell index of possibly out-of-range coordinates; periodic directions wrap.
    pub fn cell_at(&self, i: isize, j: isize) -> Option<usize> {
        let i = wrap(i, self.nx, self.bc[0])?;
        let j = wrap(j, self.ny, self.bc[1])?;
        Some(self.cell(i, j))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h]
    }

    /// Array shape `[along x, along y]` of component `c`.
    pub fn face_dims(&self, c: usize) -> [usize; 2] {
        let mut dims = [self.nx, self.ny];
        if self.bc[c] == Boundary::Wall {
            dims[c] += 1;
        }
        dims
    }

    #[inline]
    pub fn num_faces(&self, c: usize) -> usize {
        let d = self.face_dims(c);
        d[0] * d[1]
    }

    #[inline]
    pub fn face(&self, c: usize, i: usize, j: usize) -> usize {
        j * self.face_dims(c)[0] + i
    }

    /// Face index of possibly out-of-range coordinates; periodic directions wrap.
    pub fn face_at(&self, c: usize, i: isize, j: isize) -> Option<usize> {
        let dims = self.face_dims(c);
        let i = wrap(i, dims[0], self.bc[0])?;
        let j = wrap(j, dims[1], self.bc[1])?;
        Some(j * dims[0] + i)
    }

    /// The two cells sharing face `(i, j)` of component `c`: `[low, high]` along `c`.
    pub fn face_cells(&self, c: usize, i: usize, j: usize) -> [Option<usize>; 2] {
        let (i, j) = (i as isize, j as isize);
        if c == 0 {
            [self.cell_at(i - 1, j), self.cell_at(i, j)]
        } else {
            [self.cell_at(i, j - 1), self.cell_at(i, j)]
        }
    }

    pub fn face_center(&self, c: usize, i: usize, j: usize) -> [f64; 2] {
        let h = self.h;
        if c == 0 {
            [i as f64 * h, (j as f64 + 0.5) * h]
        } else {
            [(i as f64 + 0.5) * h, j as f64 * h]
        }
    }

    /// Quadrature weight of a face: one half on a wall, one elsewhere.
    pub fn face_weight(&self, c: usize, i: usize, j: usize) -> f64 {
        let k = if c == 0 { i } else { j };
        if self.bc[c] == Boundary::Wall && (k == 0 || k == self.cells_along(c)) {
            0.5
        } else {
            1.0
        }
    }

    /// Shape of the tangential-difference array of component `c`. These
    /// differences sit on grid nodes; in a wall direction the first and last
    /// entries pair a face with its ghost image across the wall.
    pub fn edge_dims(&self, c: usize) -> [usize; 2] {
        let t = 1 - c;
        let mut dims = self.face_dims(c);
        if self.bc[t] == Boundary::Wall {
            dims[t] = self.cells_along(t) + 1;
        }
        dims
    }

    pub fn edge_center(&self, _c: usize, i: usize, j: usize) -> [f64; 2] {
        [i as f64 * self.h, j as f64 * self.h]
    }

    pub fn area(&self) -> f64 {
        self.nx as f64 * self.ny as f64 * self.h * self.h
    }
}

#[inline]
fn wrap(k: isize, n: usize, bc: Boundary) -> Option<usize> {
    let n = n as isize;
    match bc {
        Boundary::Periodic => Some(k.rem_euclid(n) as usize),
        Boundary::Wall => (0..n).contains(&k).then_some(k as usize),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    pub grid: MacGrid,
    pub data: Vec<f64>,
}

impl CellField {
    pub fn zeros(grid: MacGrid) -> Self {
        Self { grid, data: vec![0.0; grid.num_cells()] }
    }

    pub fn from_fn(grid: MacGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let [x, y] = grid.cell_center(i, j);
                out.data[grid.cell(i, j)] = f(x, y);
            }
        }
        out
    }

    pub fn inner(&self, other: &CellField) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        h2 * dot(&self.data, &other.data)
    }

    /// `sqrt(h^2 sum p^2)`.
    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Mean over the cells where `mask` is true.
    pub fn masked_mean(&self, mask: &[bool]) -> f64 {
        let (mut s, mut n) = (0.0, 0usize);
        for (v, &m) in self.data.iter().zip(mask) {
            if m {
                s += v;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    }

    pub fn to_dump(&self, kind: &str) -> FieldDump {
        FieldDump {
            n1: self.grid.nx,
            n2: self.grid.ny,
            h: self.grid.h,
            kind: kind.to_string(),
            values: self.data.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StaggeredField {
    pub grid: MacGrid,
    pub comps: [Vec<f64>; 2],
}

impl StaggeredField {
    pub fn zeros(grid: MacGrid) -> Self {
        Self { grid, comps: [vec![0.0; grid.num_faces(0)], vec![0.0; grid.num_faces(1)]] }
    }

    /// Samples the normal component of `f` at every face centre.
    pub fn from_fn(grid: MacGrid, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let mut out = Self::zeros(grid);
        for c in 0..2 {
            let dims = grid.face_dims(c);
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let [x, y] = grid.face_center(c, i, j);
                    out.comps[c][j * dims[0] + i] = f(x, y)[c];
                }
            }
        }
        out
    }

    pub fn u(&self) -> &[f64] {
        &self.comps[0]
    }

    pub fn v(&self) -> &[f64] {
        &self.comps[1]
    }

    /// Face inner product with half weights on wall faces.
    pub fn inner(&self, other: &StaggeredField) -> f64 {
        let g = self.grid;
        let mut s = 0.0;
        for c in 0..2 {
            let dims = g.face_dims(c);
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let k = j * dims[0] + i;
                    s += g.face_weight(c, i, j) * self.comps[c][k] * other.comps[c][k];
                }
            }
        }
        g.h * g.h * s
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.comps.iter_mut().flatten().for_each(|x| *x *= a);
        out
    }

    pub fn axpy(&mut self, a: f64, x: &StaggeredField) {
        for c in 0..2 {
            for (y, xv) in self.comps[c].iter_mut().zip(&x.comps[c]) {
                *y += a * xv;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conservative face-difference divergence.
pub fn div(vel: &StaggeredField) -> CellField {
    let g = vel.grid;
    let mut out = CellField::zeros(g);
    let inv_h = 1.0 / g.h;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (ii, jj) = (i as isize, j as isize);
            let u = &vel.comps[0];
            let v = &vel.comps[1];
            let du = u[g.face_at(0, ii + 1, jj).unwrap()] - u[g.face(0, i, j)];
            let dv = v[g.face_at(1, ii, jj + 1).unwrap()] - v[g.face(1, i, j)];
            out.data[g.cell(i, j)] = (du + dv) * inv_h;
        }
    }
    out
}

/// Two-point gradient on every face with a cell on both sides; zero on wall faces.
pub fn grad(p: &CellField) -> StaggeredField {
    let g = p.grid;
    let mut out = StaggeredField::zeros(g);
    let inv_h = 1.0 / g.h;
    for c in 0..2 {
        let dims = g.face_dims(c);
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                if let [Some(lo), Some(hi)] = g.face_cells(c, i, j) {
                    out.comps[c][j * dims[0] + i] = (p.data[hi] - p.data[lo]) * inv_h;
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceState {
    /// Both neighbouring cells are fluid: the face carries an unknown.
    Active,
    /// The face lies on a solid surface or wall: value zero at the face.
    Boundary,
    /// Every existing neighbouring cell is solid.
    Buried,
}

/// How the stencil sees a neighbouring face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbor {
    Face(usize),
    /// Prescribed zero at the neighbour's position.
    Zero,
    /// No-slip surface half-way: ghost value is minus the centre value.
    Reflect,
}

/// Per-face classification induced by a solid mask.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceMask {
    pub grid: MacGrid,
    pub state: [Vec<FaceState>; 2],
}

impl FaceMask {
    pub fn new(grid: MacGrid, solid: Option<&[bool]>) -> Self {
        let is_fluid = |k: usize| solid.is_none_or(|s| !s[k]);
        let mut state: [Vec<FaceState>; 2] = [Vec::new(), Vec::new()];
        for c in 0..2 {
            let dims = grid.face_dims(c);
            let mut st = Vec::with_capacity(dims[0] * dims[1]);
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let cells = grid.face_cells(c, i, j);
                    let fluid = cells.iter().flatten().filter(|&&k| is_fluid(k)).count();
                    let existing = cells.iter().flatten().count();
                    st.push(if existing == 2 && fluid == 2 {
                        FaceState::Active
                    } else if fluid > 0 {
                        FaceState::Boundary
                    } else {
                        FaceState::Buried
                    });
                }
            }
            state[c] = st;
        }
        Self { grid, state }
    }

    #[inline]
    pub fn is_active(&self, c: usize, k: usize) -> bool {
        self.state[c][k] == FaceState::Active
    }

    pub fn num_active(&self, c: usize) -> usize {
        self.state[c].iter().filter(|s| **s == FaceState::Active).count()
    }

    /// Neighbour of face `(c, i, j)` one step along direction `d` (`step` = +-1).
    pub fn neighbor(&self, c: usize, i: usize, j: usize, d: usize, step: isize) -> Neighbor {
        let (mut a, mut b) = (i as isize, j as isize);
        if d == 0 {
            a += step;
        } else {
            b += step;
        }
        match self.grid.face_at(c, a, b) {
            None => Neighbor::Reflect,
            Some(k) => match self.state[c][k] {
                FaceState::Active => Neighbor::Face(k),
                FaceState::Boundary => Neighbor::Zero,
                FaceState::Buried => Neighbor::Reflect,
            },
        }
    }

    /// Zeroes every non-active face value.
    pub fn restrict(&self, vel: &mut StaggeredField) {
        for c in 0..2 {
            for (x, s) in vel.comps[c].iter_mut().zip(&self.state[c]) {
                if *s != FaceState::Active {
                    *x = 0.0;
                }
            }
        }
    }
}

/// 5-point vector Laplacian on active faces; zero elsewhere.
pub fn lap(vel: &StaggeredField, faces: &FaceMask) -> StaggeredField {
    let g = vel.grid;
    let mut out = StaggeredField::zeros(g);
    let inv_h2 = 1.0 / (g.h * g.h);
    for c in 0..2 {
        let dims = g.face_dims(c);
        let src = &vel.comps[c];
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let k = j * dims[0] + i;
                if !faces.is_active(c, k) {
                    continue;
                }
                let centre = src[k];
                let mut acc = -4.0 * centre;
                for d in 0..2 {
                    for step in [-1, 1] {
                        acc += match faces.neighbor(c, i, j, d, step) {
                            Neighbor::Face(n) => src[n],
                            Neighbor::Zero => 0.0,
                            Neighbor::Reflect => -centre,
                        };
                    }
                }
                out.comps[c][k] = acc * inv_h2;
            }
        }
    }
    out
}

/// Finite-difference velocity gradient consistent with [`lap`]:
/// `h^2 (sum normal^2 + sum weight * tangential^2) = <-lap u, u>` for
/// fields vanishing off the active faces.
///
/// `normal[c]` holds `d u_c / d x_c` at cell centres; `tangential[c]` holds
/// the derivative of `u_c` across the other direction at grid nodes, with
/// weight one half where the node sits on a wall or solid surface.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceGradient {
    pub grid: MacGrid,
    pub normal: [Vec<f64>; 2],
    pub tangential: [Vec<f64>; 2],
    pub weight: [Vec<f64>; 2],
}

impl FaceGradient {
    pub fn of(vel: &StaggeredField, faces: &FaceMask) -> Self {
        let g = vel.grid;
        let inv_h = 1.0 / g.h;
        let mut normal = [vec![0.0; g.num_cells()], vec![0.0; g.num_cells()]];
        for (c, out) in normal.iter_mut().enumerate() {
            let src = &vel.comps[c];
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let (ii, jj) = (i as isize, j as isize);
                    let hi = if c == 0 { g.face_at(0, ii + 1, jj) } else { g.face_at(1, ii, jj + 1) };
                    out[g.cell(i, j)] = (src[hi.unwrap()] - src[g.face(c, i, j)]) * inv_h;
                }
            }
        }

        let mut tangential = [Vec::new(), Vec::new()];
        let mut weight = [Vec::new(), Vec::new()];
        for c in 0..2 {
            let t = 1 - c;
            let dims = g.edge_dims(c);
            let fdims = g.face_dims(c);
            let src = &vel.comps[c];
            let mut tv = vec![0.0; dims[0] * dims[1]];
            let mut tw = vec![1.0; dims[0] * dims[1]];
            for b in 0..dims[1] {
                for a in 0..dims[0] {
                    // edge between face k-1 and face k along t
                    let (ia, ib) = (a as isize, b as isize);
                    let (lo, hi) = if t == 1 {
                        (g.face_at(c, ia, ib - 1), g.face_at(c, ia, ib))
                    } else {
                        (g.face_at(c, ia - 1, ib), g.face_at(c, ia, ib))
                    };
                    let side = |f: Option<usize>| match f {
                        None => Neighbor::Reflect,
                        Some(k) => match faces.state[c][k] {
                            FaceState::Active => Neighbor::Face(k),
                            FaceState::Boundary => Neighbor::Zero,
                            FaceState::Buried => Neighbor::Reflect,
                        },
                    };
                    let e = b * dims[0] + a;
                    let (val, w) = match (side(lo), side(hi)) {
                        (Neighbor::Face(l), Neighbor::Face(r)) => (src[r] - src[l], 1.0),
                        (Neighbor::Face(l), Neighbor::Zero) => (-src[l], 1.0),
                        (Neighbor::Zero, Neighbor::Face(r)) => (src[r], 1.0),
                        (Neighbor::Face(l), Neighbor::Reflect) => (-2.0 * src[l], 0.5),
                        (Neighbor::Reflect, Neighbor::Face(r)) => (2.0 * src[r], 0.5),
                        _ => {
                            let on_wall = lo.is_none() || hi.is_none();
                            (0.0, if on_wall { 0.5 } else { 1.0 })
                        }
                    };
                    tv[e] = val * inv_h;
                    // node on a wall line normal to c
                    let kc = if c == 0 { a } else { b };
                    let wc = if g.bc[c] == Boundary::Wall && (kc == 0 || kc + 1 == fdims[c]) {
                        0.5
                    } else {
                        1.0
                    };
                    tw[e] = w * wc;
                }
            }
            tangential[c] = tv;
            weight[c] = tw;
        }
        Self { grid: g, normal, tangential, weight }
    }

    /// Weighted squared L2 norm of the full gradient tensor.
    pub fn norm_sq(&self) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        let mut s = 0.0;
        for c in 0..2 {
            s += self.normal[c].iter().map(|x| x * x).sum::<f64>();
            s += self.tangential[c].iter().zip(&self.weight[c]).map(|(x, w)| w * x * x).sum::<f64>();
        }
        h2 * s
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Weighted inner product of two gradients sharing a mask.
    pub fn inner(&self, other: &FaceGradient) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        let mut s = 0.0;
        for c in 0..2 {
            s += dot(&self.normal[c], &other.normal[c]);
            s += self.tangential[c]
                .iter()
                .zip(&other.tangential[c])
                .zip(&self.weight[c])
                .map(|((a, b), w)| w * a * b)
                .sum::<f64>();
        }
        h2 * s
    }
}

/// Plain-text field dump: header `n1 n2 h kind`, then `n2` rows of `n1` values.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub n1: usize,
    pub n2: usize,
    pub h: f64,
    pub kind: String,
    pub values: Vec<f64>,
}

impl FieldDump {
    pub fn from_faces(vel: &StaggeredField, c: usize, kind: &str) -> Self {
        let dims = vel.grid.face_dims(c);
        Self { n1: dims[0], n2: dims[1], h: vel.grid.h, kind: kind.into(), values: vel.comps[c].clone() }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {} {:e} {}", self.n1, self.n2, self.h, self.kind).unwrap();
        for row in self.values.chunks(self.n1) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(s, "{}", line.join(" ")).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Io(format!("malformed field dump: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(bad("header must be `n1 n2 h kind`"));
        }
        let n1: usize = parts[0].parse().map_err(|_| bad("n1"))?;
        let n2: usize = parts[1].parse().map_err(|_| bad("n2"))?;
        let h: f64 = parts[2].parse().map_err(|_| bad("h"))?;
        let kind = parts[3].to_string();
        let values = lines
            .flat_map(str::split_whitespace)
            .map(|t| t.parse::<f64>().map_err(|_| bad(t)))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != n1 * n2 {
            return Err(bad(&format!("expected {} values, found {}", n1 * n2, values.len())));
        }
        Ok(Self { n1, n2, h, kind, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn l2_norm(&self) -> f64 {
        (self.h * self.h * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: MacGrid, rng: &mut ChaCha8Rng) -> StaggeredField {
        let mut f = StaggeredField::zeros(g);
        f.comps.iter_mut().flatten().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        f
    }

    #[test]
    fn constant_field_is_divergence_free_on_periodic_grid() {
        let g = MacGrid::periodic(8);
        let f = StaggeredField::from_fn(g, |_, _| [1.0, 0.0]);
        assert!(div(&f).data.iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn linear_field_has_unit_divergence() {
        let g = MacGrid::walled(10);
        let f = StaggeredField::from_fn(g, |x, _| [x, 0.0]);
        for d in div(&f).data {
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_on_two_by_two_matches_hand_stencil() {
        let g = MacGrid::periodic(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_field(g, &mut rng);
        let (u, v) = (f.u(), f.v());
        let h = 0.5;
        // u faces (i, j) at index 2j + i; periodic wrap i+1 -> 0 for i = 1
        let hand = [
            (u[1] - u[0] + v[2] - v[0]) / h,
            (u[0] - u[1] + v[3] - v[1]) / h,
            (u[3] - u[2] + v[0] - v[2]) / h,
            (u[2] - u[3] + v[1] - v[3]) / h,
        ];
        let d = div(&f);
        for (a, b) in d.data.iter().zip(hand) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        for g in [MacGrid::periodic(6), MacGrid::walled(6)] {
            let p = CellField::from_fn(g, |_, _| 3.5);
            assert_eq!(grad(&p).max_abs(), 0.0);
        }
    }

    #[test]
    fn gradient_is_negative_adjoint_of_divergence_periodic() {
        let g = MacGrid::periodic(16);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_field(g, &mut rng);
        let mut p = CellField::zeros(g);
        p.data.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let lhs = grad(&p).inner(&u);
        let rhs = -p.inner(&div(&u));
        assert!((lhs - rhs).abs() <= 1e-12 * p.l2_norm() * u.l2_norm());
    }

    #[test]
    fn gradient_is_negative_adjoint_for_admissible_wall_fields() {
        let g = MacGrid::walled(12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut solid = vec![false; g.num_cells()];
        solid[g.cell(5, 5)] = true;
        solid[g.cell(6, 5)] = true;
        let faces = FaceMask::new(g, Some(&solid));
        let mut u = random_field(g, &mut rng);
        faces.restrict(&mut u);
        let mut p = CellField::zeros(g);
        p.data.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let lhs = grad(&p).inner(&u);
        let rhs = -p.inner(&div(&u));
        assert!((lhs - rhs).abs() <= 1e-12 * p.l2_norm() * u.l2_norm());
    }

    #[test]
    fn gradient_norm_matches_laplacian_energy() {
        for g in [MacGrid::periodic(12), MacGrid::walled(12)] {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut solid = vec![false; g.num_cells()];
            for j in 4..7 {
                for i in 3..8 {
                    solid[g.cell(i, j)] = true;
                }
            }
            let faces = FaceMask::new(g, Some(&solid));
            let mut u = random_field(g, &mut rng);
            faces.restrict(&mut u);
            let energy = -lap(&u, &faces).inner(&u);
            let grad_sq = FaceGradient::of(&u, &faces).norm_sq();
            assert!(energy > 0.0);
            assert!((energy - grad_sq).abs() < 1e-10 * energy, "{energy} vs {grad_sq}");
        }
    }

    #[test]
    fn laplacian_is_symmetric_on_masked_faces() {
        let g = MacGrid::walled(10);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut solid = vec![false; g.num_cells()];
        solid[g.cell(2, 7)] = true;
        solid[g.cell(3, 7)] = true;
        solid[g.cell(3, 8)] = true;
        let faces = FaceMask::new(g, Some(&solid));
        let mut a = random_field(g, &mut rng);
        let mut b = random_field(g, &mut rng);
        faces.restrict(&mut a);
        faces.restrict(&mut b);
        let ab = lap(&a, &faces).inner(&b);
        let ba = lap(&b, &faces).inner(&a);
        assert!((ab - ba).abs() < 1e-10 * ab.abs().max(1.0));
    }

    #[test]
    fn laplacian_converges_at_second_order() {
        // u = (sin 2 pi y cos 2 pi x, cos 2 pi x sin 2 pi y); lap = -8 pi^2 u
        let pi2 = 2.0 * std::f64::consts::PI;
        let exact = |x: f64, y: f64| [(pi2 * y).sin() * (pi2 * x).cos(), (pi2 * x).cos() * (pi2 * y).sin()];
        let mut errs = Vec::new();
        let ns = [16usize, 32, 64];
        for &n in &ns {
            let g = MacGrid::periodic(n);
            let faces = FaceMask::new(g, None);
            let u = StaggeredField::from_fn(g, exact);
            let mut e = lap(&u, &faces);
            let target = StaggeredField::from_fn(g, |x, y| {
                let v = exact(x, y);
                [-2.0 * pi2 * pi2 * v[0], -2.0 * pi2 * pi2 * v[1]]
            });
            e.axpy(-1.0, &target);
            errs.push(e.l2_norm());
        }
        let slope = (errs[0] / errs[2]).ln() / 4f64.ln();
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn unit_norms_are_exact() {
        let g = MacGrid::walled(7);
        let one = CellField::from_fn(g, |_, _| 1.0);
        assert!((one.l2_norm() - 1.0).abs() < 1e-14);
        let ones = StaggeredField::from_fn(g, |_, _| [1.0, 0.0]);
        assert!((ones.l2_norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dump_text_round_trips() {
        let g = MacGrid::walled(3);
        let p = CellField::from_fn(g, |x, y| x - 2.0 * y + 1e-300);
        let d = p.to_dump("cell");
        let back = FieldDump::parse(&d.to_text()).unwrap();
        assert_eq!(back, d);
        assert!(FieldDump::parse("3 3 0.1").is_err());
    }


    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn adjointness_and_laplacian_sign_hold_on_random_masks(
            n in 3usize..14,
            periodic in proptest::bool::ANY,
            seed in 0u64..u64::MAX,
            holes in proptest::collection::vec((0usize..14, 0usize..14), 0..8),
        ) {
            let g = if periodic { MacGrid::periodic(n) } else { MacGrid::walled(n) };
            let mut solid = vec![false; g.num_cells()];
            for (i, j) in holes {
                solid[g.cell(i % n, j % n)] = true;
            }
            let faces = FaceMask::new(g, Some(&solid));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut u = random_field(g, &mut rng);
            faces.restrict(&mut u);
            let mut p = CellField::zeros(g);
            p.data.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
            let lhs = grad(&p).inner(&u);
            let rhs = -p.inner(&div(&u));
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + p.l2_norm() * u.l2_norm()));
            proptest::prop_assert!(-lap(&u, &faces).inner(&u) >= -1e-12);
        }
    }
}
