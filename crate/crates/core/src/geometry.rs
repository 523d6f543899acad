//! Unit-cell obstacles, subdomain layouts and the perforated fine mesh.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::grid::MacGrid;

/// Solid part of the unit cell `[0, 1]^2`.
#[derive(Clone, Debug, PartialEq)]
pub enum ObstacleSpec {
    AxisSquare { center: [f64; 2], side: f64 },
    Disk { center: [f64; 2], radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl ObstacleSpec {
    pub fn square(cx: f64, cy: f64, side: f64) -> Self {
        Self::AxisSquare { center: [cx, cy], side }
    }

    pub fn disk(cx: f64, cy: f64, radius: f64) -> Self {
        Self::Disk { center: [cx, cy], radius }
    }

    /// Open-set membership test.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Self::AxisSquare { center, side } => {
                (p[0] - center[0]).abs() < 0.5 * side && (p[1] - center[1]).abs() < 0.5 * side
            }
            Self::Disk { center, radius } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                dx * dx + dy * dy < radius * radius
            }
            Self::Polygon { vertices } => point_in_polygon(vertices, p),
        }
    }

    /// `[[xmin, ymin], [xmax, ymax]]`.
    pub fn bounding_box(&self) -> [[f64; 2]; 2] {
        match self {
            Self::AxisSquare { center, side } => {
                let r = 0.5 * side;
                [[center[0] - r, center[1] - r], [center[0] + r, center[1] + r]]
            }
            Self::Disk { center, radius } => {
                [[center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius]]
            }
            Self::Polygon { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for d in 0..2 {
                        lo[d] = lo[d].min(v[d]);
                        hi[d] = hi[d].max(v[d]);
                    }
                }
                [lo, hi]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |p: &[f64; 2]| p.iter().all(|x| x.is_finite());
        match self {
            Self::AxisSquare { center, side } => {
                if !finite(center) || !(*side > 0.0 && side.is_finite()) {
                    return Err(Error::InvalidObstacle(format!("square side {side}")));
                }
            }
            Self::Disk { center, radius } => {
                if !finite(center) || !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidObstacle(format!("disk radius {radius}")));
                }
            }
            Self::Polygon { vertices } => {
                if vertices.len() < 3 || !vertices.iter().all(finite) {
                    return Err(Error::InvalidObstacle("polygon needs at least 3 finite vertices".into()));
                }
            }
        }
        let [lo, hi] = self.bounding_box();
        if lo.iter().any(|&x| x <= 0.0) || hi.iter().any(|&x| x >= 1.0) {
            return Err(Error::ObstacleTouchesBoundary(format!(
                "bounding box [{}, {}] x [{}, {}] leaves no margin inside the unit cell",
                lo[0], hi[0], lo[1], hi[1]
            )));
        }
        Ok(())
    }
}

fn point_in_polygon(vs: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    let mut j = vs.len() - 1;
    for i in 0..vs.len() {
        let (a, b) = (vs[i], vs[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Rasterised unit cell: `solid[j * n + i]` for cell `(i, j)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellMask {
    pub n: usize,
    pub solid: Vec<bool>,
}

impl CellMask {
    pub fn num_solid(&self) -> usize {
        self.solid.iter().filter(|s| **s).count()
    }

    pub fn solid_fraction(&self) -> f64 {
        self.num_solid() as f64 / self.solid.len() as f64
    }

    /// `|Y_f|`, the fluid area of the unit cell.
    pub fn fluid_fraction(&self) -> f64 {
        1.0 - self.solid_fraction()
    }

    pub fn is_solid(&self, i: usize, j: usize) -> bool {
        self.solid[j * self.n + i]
    }

    /// Counter-clockwise rotation by 90 degrees about the cell centre.
    pub fn rotate90(&self) -> Self {
        let n = self.n;
        let mut solid = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                // (x, y) -> (1 - y, x)
                solid[i * n + (n - 1 - j)] = self.solid[j * n + i];
            }
        }
        Self { n, solid }
    }
}

/// Cell-centre rasterisation of `obstacle` on an `n x n` grid of the unit cell.
pub fn rasterize_cell(obstacle: &ObstacleSpec, n: usize) -> Result<CellMask> {
    if n < 8 {
        return Err(Error::InvalidGrid(format!("unit cell needs n >= 8, got {n}")));
    }
    obstacle.validate()?;
    let h = 1.0 / n as f64;
    let mut solid = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            solid[j * n + i] = obstacle.contains([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
        }
    }
    let ring_hit = (0..n).any(|k| solid[k] || solid[(n - 1) * n + k] || solid[k * n] || solid[k * n + n - 1]);
    if ring_hit {
        return Err(Error::ObstacleTouchesBoundary(format!("solid cells in the boundary ring at n = {n}")));
    }
    let components = fluid_components(n, n, &solid, true);
    if components != 1 {
        return Err(Error::DisconnectedFluid { components });
    }
    Ok(CellMask { n, solid })
}

/// Number of 4-connected fluid components.
pub fn fluid_components(n1: usize, n2: usize, solid: &[bool], periodic: bool) -> usize {
    let mut seen = vec![false; n1 * n2];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..n1 * n2 {
        if solid[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            let (i, j) = ((k % n1) as isize, (k / n1) as isize);
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (mut a, mut b) = (i + di, j + dj);
                if periodic {
                    a = a.rem_euclid(n1 as isize);
                    b = b.rem_euclid(n2 as isize);
                } else if a < 0 || b < 0 || a >= n1 as isize || b >= n2 as isize {
                    continue;
                }
                let m = b as usize * n1 + a as usize;
                if !solid[m] && !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
    }
    count
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    WholeDomain,
    /// Half of the unit square cut by the line `x_{axis+1} = value`
    /// (`axis` is 0 for `x1`, 1 for `x2`).
    HalfSplit { axis: usize, value: f64, side: Side },
}

/// Partition of the unit square into subdomains, each carrying a
/// microstructure id (index into the obstacle list).
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub subdomains: Vec<(Region, usize)>,
}

impl Layout {
    pub fn whole(micro_id: usize) -> Self {
        Self { subdomains: vec![(Region::WholeDomain, micro_id)] }
    }

    pub fn half_split(axis: usize, value: f64, below_id: usize, above_id: usize) -> Self {
        Self {
            subdomains: vec![
                (Region::HalfSplit { axis, value, side: Side::Below }, below_id),
                (Region::HalfSplit { axis, value, side: Side::Above }, above_id),
            ],
        }
    }

    pub fn validate(&self, num_obstacles: usize) -> Result<()> {
        if let Some((_, id)) = self.subdomains.iter().find(|(_, id)| *id >= num_obstacles) {
            return Err(Error::InvalidLayout(format!(
                "microstructure id {id} out of range ({num_obstacles} obstacles)"
            )));
        }
        match self.subdomains.as_slice() {
            [(Region::WholeDomain, _)] => Ok(()),
            [(Region::HalfSplit { axis: a0, value: v0, side: s0 }, _), (Region::HalfSplit { axis: a1, value: v1, side: s1 }, _)]
                if a0 == a1 && v0 == v1 && s0 != s1 =>
            {
                if *a0 > 1 {
                    return Err(Error::InvalidLayout(format!("split axis {} (expected 1 or 2)", a0 + 1)));
                }
                if !(*v0 > 0.0 && *v0 < 1.0) {
                    return Err(Error::InvalidLayout(format!("split value {v0} outside (0, 1)")));
                }
                Ok(())
            }
            _ => Err(Error::InvalidLayout(
                "expected one whole-domain region or two complementary half splits".into(),
            )),
        }
    }

    /// The flat interface as `(axis, value)`, if any.
    pub fn interface(&self) -> Option<(usize, f64)> {
        match self.subdomains.first() {
            Some((Region::HalfSplit { axis, value, .. }, _)) => Some((*axis, *value)),
            _ => None,
        }
    }

    fn region_side(&self, s: usize) -> Option<Side> {
        match self.subdomains[s].0 {
            Region::HalfSplit { side, .. } => Some(side),
            Region::WholeDomain => None,
        }
    }

    /// Subdomain holding point `p` (points on the interface go above).
    pub fn subdomain_of(&self, p: [f64; 2]) -> usize {
        match self.interface() {
            None => 0,
            Some((axis, value)) => {
                let side = if p[axis] < value { Side::Below } else { Side::Above };
                (0..self.subdomains.len()).find(|&s| self.region_side(s) == Some(side)).unwrap()
            }
        }
    }

    /// Whether the closed box `[lo, hi]` lies in the closure of subdomain `s`.
    pub fn box_inside(&self, s: usize, lo: [f64; 2], hi: [f64; 2]) -> bool {
        match self.subdomains[s].0 {
            Region::WholeDomain => true,
            Region::HalfSplit { axis, value, side } => {
                let tol = 1e-12;
                match side {
                    Side::Below => hi[axis] <= value + tol,
                    Side::Above => lo[axis] >= value - tol,
                }
            }
        }
    }

    pub fn micro_id(&self, s: usize) -> usize {
        self.subdomains[s].1
    }

    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }
}

/// Fine mesh of the perforated domain: `1/eps` periods per side, each
/// resolved by `n_per_cell` grid cells.
#[derive(Clone, Debug)]
pub struct PerforatedMesh {
    pub eps: f64,
    pub n_per_cell: usize,
    /// Number of periods per side, `1/eps`.
    pub periods: usize,
    pub grid: MacGrid,
    pub layout: Layout,
    /// Unit-cell masks, indexed by microstructure id.
    pub cells: Vec<CellMask>,
    pub solid: Vec<bool>,
    /// Subdomain of every grid cell (by cell centre).
    pub subdomain: Vec<usize>,
    /// Perforated lattice cells `z` per subdomain.
    pub perforated: Vec<Vec<[usize; 2]>>,
    /// Interface as `(axis, face line index)`: faces normal to `axis` with
    /// that index lie on the discrete interface.
    pub interface_line: Option<(usize, usize)>,
}

impl PerforatedMesh {
    pub fn fluid(&self) -> Vec<bool> {
        self.solid.iter().map(|s| !s).collect()
    }

    /// Lattice cell `z` containing grid cell `(i, j)`.
    pub fn lattice_cell(&self, i: usize, j: usize) -> [usize; 2] {
        [i / self.n_per_cell, j / self.n_per_cell]
    }

    pub fn perforated_counts(&self) -> Vec<usize> {
        self.perforated.iter().map(Vec::len).collect()
    }

    /// Subdomains touching face `(c, i, j)` with their quadrature share:
    /// one entry away from the interface, two halves on it.
    pub fn face_sides(&self, c: usize, i: usize, j: usize) -> Vec<(usize, f64)> {
        let g = &self.grid;
        if let Some((axis, line)) = self.interface_line {
            let k = if c == 0 { i } else { j };
            if axis == c && k == line {
                let [lo, hi] = g.face_cells(c, i, j);
                return vec![(self.subdomain[lo.unwrap()], 0.5), (self.subdomain[hi.unwrap()], 0.5)];
            }
        }
        let [lo, hi] = g.face_cells(c, i, j);
        let k = hi.or(lo).unwrap();
        vec![(self.subdomain[k], 1.0)]
    }

    /// Subdomains touching grid node `(a, b)`, with shares.
    pub fn node_sides(&self, a: usize, b: usize) -> Vec<(usize, f64)> {
        let n = self.grid.nx;
        let clamp = |k: usize| k.min(n - 1);
        if let Some((axis, line)) = self.interface_line {
            let k = if axis == 0 { a } else { b };
            if k == line {
                let (lo, hi) = if axis == 0 {
                    (self.grid.cell(line - 1, clamp(b)), self.grid.cell(line, clamp(b)))
                } else {
                    (self.grid.cell(clamp(a), line - 1), self.grid.cell(clamp(a), line))
                };
                return vec![(self.subdomain[lo], 0.5), (self.subdomain[hi], 0.5)];
            }
        }
        vec![(self.subdomain[self.grid.cell(clamp(a), clamp(b))], 1.0)]
    }
}

pub fn build_perforated_mesh(
    layout: &Layout,
    obstacles: &[ObstacleSpec],
    eps: f64,
    n_per_cell: usize,
) -> Result<PerforatedMesh> {
    layout.validate(obstacles.len())?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidGrid(format!("period eps = {eps} outside (0, 1]")));
    }
    let inv = 1.0 / eps;
    let periods = inv.round() as usize;
    if (inv - periods as f64).abs() > 1e-9 * inv {
        return Err(Error::InvalidGrid(format!("1/eps = {inv} is not an integer")));
    }
    let cells = obstacles.iter().map(|o| rasterize_cell(o, n_per_cell)).collect::<Result<Vec<_>>>()?;
    let n = periods * n_per_cell;
    let grid = MacGrid::walled(n);

    let subdomain: Vec<usize> = (0..n * n)
        .map(|k| layout.subdomain_of(grid.cell_center(k % n, k / n)))
        .collect();
    let interface_line = match layout.interface() {
        None => None,
        Some((axis, _)) => {
            // first cell index on the upper side
            let line = (0..n)
                .find(|&k| {
                    let cell = if axis == 0 { grid.cell(k, 0) } else { grid.cell(0, k) };
                    subdomain[cell] != subdomain[0]
                })
                .unwrap_or(n);
            if line == 0 || line == n {
                return Err(Error::InvalidLayout(format!("interface does not cross the {n}x{n} grid")));
            }
            Some((axis, line))
        }
    };

    let mut solid = vec![false; n * n];
    let mut perforated = vec![Vec::new(); layout.len()];
    for zb in 0..periods {
        for za in 0..periods {
            let lo = [za as f64 * eps, zb as f64 * eps];
            let hi = [(za + 1) as f64 * eps, (zb + 1) as f64 * eps];
            let Some(s) = (0..layout.len()).find(|&s| layout.box_inside(s, lo, hi)) else {
                continue;
            };
            // the lattice cell must also be made of grid cells of subdomain s
            let owner_ok = (0..n_per_cell).all(|b| {
                (0..n_per_cell).all(|a| subdomain[grid.cell(za * n_per_cell + a, zb * n_per_cell + b)] == s)
            });
            if !owner_ok {
                continue;
            }
            let mask = &cells[layout.micro_id(s)];
            for b in 0..n_per_cell {
                for a in 0..n_per_cell {
                    if mask.is_solid(a, b) {
                        solid[grid.cell(za * n_per_cell + a, zb * n_per_cell + b)] = true;
                    }
                }
            }
            perforated[s].push([za, zb]);
        }
    }
    if let Some(s) = perforated.iter().position(Vec::is_empty) {
        return Err(Error::EpsTooLarge { eps, subdomain: s });
    }
    Ok(PerforatedMesh { eps, n_per_cell, periods, grid, layout: layout.clone(), cells, solid, subdomain, perforated, interface_line })
}

/// Plain PGM (P2) image of a mask: 0 = solid, 255 = fluid, top row first.
pub fn mask_to_pgm(n1: usize, n2: usize, solid: &[bool]) -> String {
    let mut s = format!("P2\n{n1} {n2}\n255\n");
    for j in (0..n2).rev() {
        let row: Vec<&str> = (0..n1).map(|i| if solid[j * n1 + i] { "0" } else { "255" }).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_aligned_square_is_exact() {
        let m = rasterize_cell(&ObstacleSpec::square(0.5, 0.5, 0.5), 8).unwrap();
        assert_eq!(m.num_solid(), 16);
        assert_eq!(m.solid_fraction(), 0.25);
    }

    #[test]
    fn disk_area_within_two_percent() {
        let m = rasterize_cell(&ObstacleSpec::disk(0.5, 0.5, 0.25), 64).unwrap();
        let exact = std::f64::consts::PI / 16.0;
        assert!((m.solid_fraction() - exact).abs() / exact < 0.02);
    }

    #[test]
    fn full_square_touches_boundary() {
        let e = rasterize_cell(&ObstacleSpec::square(0.5, 0.5, 1.0), 8).unwrap_err();
        assert!(matches!(e, Error::ObstacleTouchesBoundary(_)));
    }

    #[test]
    fn boundary_ring_must_stay_fluid_at_resolution() {
        // margin 0.02 < h/2: the ring cells' centres fall inside
        let e = rasterize_cell(&ObstacleSpec::square(0.5, 0.5, 0.96), 8).unwrap_err();
        assert!(matches!(e, Error::ObstacleTouchesBoundary(_)));
    }

    #[test]
    fn enclosed_fluid_pocket_is_rejected() {
        // annulus: polygon ring enclosing a fluid hole is built from a frame
        let frame = ObstacleSpec::Polygon {
            vertices: vec![
                [0.2, 0.2], [0.8, 0.2], [0.8, 0.8], [0.2, 0.8], [0.2, 0.2],
                [0.4, 0.4], [0.4, 0.6], [0.6, 0.6], [0.6, 0.4], [0.4, 0.4],
            ],
        };
        let e = rasterize_cell(&frame, 20).unwrap_err();
        assert_eq!(e, Error::DisconnectedFluid { components: 2 });
    }

    #[test]
    fn polygon_triangle_membership() {
        let t = ObstacleSpec::Polygon { vertices: vec![[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]] };
        assert!(t.contains([0.5, 0.4]));
        assert!(!t.contains([0.25, 0.7]));
    }

    #[test]
    fn rotation_preserves_count_and_is_cyclic() {
        let t = ObstacleSpec::Polygon { vertices: vec![[0.2, 0.2], [0.7, 0.25], [0.3, 0.75]] };
        let m = rasterize_cell(&t, 16).unwrap();
        let r = m.rotate90();
        assert_eq!(r.num_solid(), m.num_solid());
        assert_ne!(r, m);
        assert_eq!(r.rotate90().rotate90().rotate90(), m);
    }

    #[test]
    fn whole_domain_quarter_period_has_sixteen_cells() {
        let mesh = build_perforated_mesh(&Layout::whole(0), &[ObstacleSpec::square(0.5, 0.5, 0.5)], 0.25, 8).unwrap();
        assert_eq!(mesh.perforated_counts(), vec![16]);
        assert_eq!(mesh.grid.nx, 32);
    }

    #[test]
    fn half_split_gives_eight_cells_each() {
        let obs = [ObstacleSpec::square(0.5, 0.5, 0.25), ObstacleSpec::square(0.5, 0.5, 0.5)];
        let mesh = build_perforated_mesh(&Layout::half_split(1, 0.5, 0, 1), &obs, 0.25, 8).unwrap();
        assert_eq!(mesh.perforated_counts(), vec![8, 8]);
        assert_eq!(mesh.interface_line, Some((1, 16)));
    }

    #[test]
    fn straddling_row_is_not_perforated() {
        let obs = [ObstacleSpec::square(0.5, 0.5, 0.5)];
        let mesh = build_perforated_mesh(&Layout::half_split(1, 0.45, 0, 0), &obs, 0.25, 20).unwrap();
        let rows: Vec<usize> = mesh.perforated.iter().flatten().map(|z| z[1]).collect();
        assert!(!rows.contains(&1));
        assert_eq!(mesh.perforated_counts(), vec![4, 8]);
        for j in 20..40 {
            for i in 0..80 {
                assert!(!mesh.solid[mesh.grid.cell(i, j)]);
            }
        }
    }

    #[test]
    fn coarse_period_starves_a_subdomain() {
        let obs = [ObstacleSpec::square(0.5, 0.5, 0.5)];
        let e = build_perforated_mesh(&Layout::half_split(1, 0.5, 0, 0), &obs, 1.0, 8).unwrap_err();
        assert!(matches!(e, Error::EpsTooLarge { .. }));
    }

    #[test]
    fn stamped_cells_reproduce_unit_cell_fraction() {
        let obs = [ObstacleSpec::disk(0.5, 0.5, 0.3)];
        let mesh = build_perforated_mesh(&Layout::whole(0), &obs, 0.125, 16).unwrap();
        let frac = mesh.cells[0].solid_fraction();
        for z in &mesh.perforated[0] {
            let mut s = 0;
            for b in 0..16 {
                for a in 0..16 {
                    s += mesh.solid[mesh.grid.cell(z[0] * 16 + a, z[1] * 16 + b)] as usize;
                }
            }
            assert_eq!(s as f64 / 256.0, frac);
        }
        assert_eq!(fluid_components(mesh.grid.nx, mesh.grid.ny, &mesh.solid, false), 1);
    }

    #[test]
    fn pgm_header_and_pixels() {
        let pgm = mask_to_pgm(2, 2, &[true, false, false, false]);
        assert_eq!(pgm, "P2\n2 2\n255\n255 255\n0 255\n");
    }


    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn perforation_is_contained_exact_and_connected(
            side in 0.15f64..0.6,
            radius in 0.1f64..0.35,
            periods in 2usize..7,
            n_per_cell in proptest::sample::select(vec![8usize, 12, 16]),
            split in proptest::option::of((0usize..2, 0.3f64..0.7)),
        ) {
            let obs = [ObstacleSpec::square(0.5, 0.5, side), ObstacleSpec::disk(0.5, 0.5, radius)];
            let layout = match split {
                None => Layout::whole(0),
                Some((axis, value)) => Layout::half_split(axis, value, 0, 1),
            };
            let eps = 1.0 / periods as f64;
            let Ok(mesh) = build_perforated_mesh(&layout, &obs, eps, n_per_cell) else {
                return Ok(());
            };
            let g = mesh.grid;
            let m = n_per_cell;
            for j in 0..g.ny {
                for i in 0..g.nx {
                    if mesh.solid[g.cell(i, j)] {
                        let z = mesh.lattice_cell(i, j);
                        let s = (0..layout.len()).find(|&s| mesh.perforated[s].contains(&z));
                        proptest::prop_assert!(s.is_some());
                        let lo = [z[0] as f64 * eps, z[1] as f64 * eps];
                        proptest::prop_assert!(layout.box_inside(s.unwrap(), lo, [lo[0] + eps, lo[1] + eps]));
                    }
                }
            }
            for (s, cells) in mesh.perforated.iter().enumerate() {
                let unit = mesh.cells[layout.micro_id(s)].num_solid();
                for z in cells {
                    let count = (0..m * m).filter(|k| mesh.solid[g.cell(z[0] * m + k % m, z[1] * m + k / m)]).count();
                    proptest::prop_assert_eq!(count, unit);
                }
            }
            proptest::prop_assert_eq!(fluid_components(g.nx, g.ny, &mesh.solid, false), 1);
        }
    }
}
