//! Simplicial meshes of compact manifolds with metric-weighted measure.
//!
//! Three built-in families cover the cases the theory distinguishes: an
//! interval (manifold with boundary), a flat torus (flat closed manifold) and
//! an icosphere (curved closed manifold, piecewise-flat metric). Arbitrary
//! meshes load from a plain text format, see [`Mesh::load`].
//!
//! The metric is handled piecewise-flat: the `√det g` factor of each embedded
//! simplex is absorbed into its volume, so integration reduces to volume
//! weighted sums over cells.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::PlapError;
use crate::Result;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Hard cap on icosphere subdivision depth (20 · 4^8 ≈ 1.3M cells).
pub const MAX_SPHERE_SUBDIVISIONS: u32 = 8;

/// Simplicial mesh of a compact manifold of intrinsic dimension 1 or 2.
#[derive(Debug, Clone)]
pub struct Mesh {
    id: u64,
    dimension: usize,
    vertices: Vec<[f64; 3]>,
    embed_dim: usize,
    cells: Vec<Vec<usize>>,
    boundary_nodes: BTreeSet<usize>,
    closed: bool,
    /// Periodic box lengths for fundamental-domain coordinates (flat torus).
    period: Option<Vec<f64>>,
    // derived, immutable after construction
    cell_volumes: Vec<f64>,
    basis_gradients: Vec<Vec<[f64; 2]>>,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension
            && self.embed_dim == other.embed_dim
            && self.vertices == other.vertices
            && self.cells == other.cells
            && self.boundary_nodes == other.boundary_nodes
            && self.closed == other.closed
            && self.period == other.period
    }
}

impl Mesh {
    fn assemble(
        dimension: usize,
        embed_dim: usize,
        vertices: Vec<[f64; 3]>,
        cells: Vec<Vec<usize>>,
        boundary_nodes: BTreeSet<usize>,
        closed: bool,
        period: Option<Vec<f64>>,
    ) -> Result<Self> {
        let mut mesh = Mesh {
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            dimension,
            embed_dim,
            vertices,
            cells,
            boundary_nodes,
            closed,
            period,
            cell_volumes: Vec::new(),
            basis_gradients: Vec::new(),
        };
        mesh.compute_cell_geometry()?;
        mesh.validate()?;
        Ok(mesh)
    }

    /// Uniform mesh of the interval [0, length].
    pub fn interval(n_cells: usize, length: f64) -> Result<Self> {
        if n_cells < 2 {
            return Err(PlapError::invalid("interval mesh needs n_cells >= 2"));
        }
        if !(length > 0.0) {
            return Err(PlapError::invalid("interval mesh needs length > 0"));
        }
        let h = length / n_cells as f64;
        let vertices: Vec<[f64; 3]> = (0..=n_cells).map(|i| [i as f64 * h, 0.0, 0.0]).collect();
        let cells: Vec<Vec<usize>> = (0..n_cells).map(|i| vec![i, i + 1]).collect();
        let boundary = [0, n_cells].into_iter().collect();
        Mesh::assemble(1, 1, vertices, cells, boundary, false, None)
    }

    /// Periodic triangulated grid on the flat torus of side lengths lx × ly.
    pub fn flat_torus(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(PlapError::invalid("torus mesh needs nx, ny >= 3"));
        }
        if !(lx > 0.0) || !(ly > 0.0) {
            return Err(PlapError::invalid("torus mesh needs positive side lengths"));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        let idx = |i: usize, j: usize| (j % ny) * nx + (i % nx);
        let mut vertices = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                vertices.push([i as f64 * hx, j as f64 * hy, 0.0]);
            }
        }
        let mut cells = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let v00 = idx(i, j);
                let v10 = idx(i + 1, j);
                let v01 = idx(i, j + 1);
                let v11 = idx(i + 1, j + 1);
                cells.push(vec![v00, v10, v11]);
                cells.push(vec![v00, v11, v01]);
            }
        }
        Mesh::assemble(2, 2, vertices, cells, BTreeSet::new(), true, Some(vec![lx, ly]))
    }

    /// Icosahedron subdivided `subdivisions` times, vertices projected to the
    /// sphere of the given radius. The per-cell volume is the flat area of the
    /// embedded triangle.
    pub fn icosphere(subdivisions: u32, radius: f64) -> Result<Self> {
        if subdivisions > MAX_SPHERE_SUBDIVISIONS {
            return Err(PlapError::invalid(format!(
                "sphere subdivisions capped at {MAX_SPHERE_SUBDIVISIONS}"
            )));
        }
        if !(radius > 0.0) {
            return Err(PlapError::invalid("sphere needs radius > 0"));
        }
        let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
        let raw: [[f64; 3]; 12] = [
            [-1.0, phi, 0.0],
            [1.0, phi, 0.0],
            [-1.0, -phi, 0.0],
            [1.0, -phi, 0.0],
            [0.0, -1.0, phi],
            [0.0, 1.0, phi],
            [0.0, -1.0, -phi],
            [0.0, 1.0, -phi],
            [phi, 0.0, -1.0],
            [phi, 0.0, 1.0],
            [-phi, 0.0, -1.0],
            [-phi, 0.0, 1.0],
        ];
        let project = |v: [f64; 3]| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n * radius, v[1] / n * radius, v[2] / n * radius]
        };
        let mut vertices: Vec<[f64; 3]> = raw.iter().map(|&v| project(v)).collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoint_cache = std::collections::HashMap::new();
            let mut next_faces = Vec::with_capacity(faces.len() * 4);
            for face in &faces {
                let mut mids = [0usize; 3];
                for e in 0..3 {
                    let a = face[e];
                    let b = face[(e + 1) % 3];
                    let key = (a.min(b), a.max(b));
                    mids[e] = *midpoint_cache.entry(key).or_insert_with(|| {
                        let pa = vertices[a];
                        let pb = vertices[b];
                        vertices.push(project([
                            0.5 * (pa[0] + pb[0]),
                            0.5 * (pa[1] + pb[1]),
                            0.5 * (pa[2] + pb[2]),
                        ]));
                        vertices.len() - 1
                    });
                }
                next_faces.push([face[0], mids[0], mids[2]]);
                next_faces.push([face[1], mids[1], mids[0]]);
                next_faces.push([face[2], mids[2], mids[1]]);
                next_faces.push([mids[0], mids[1], mids[2]]);
            }
            faces = next_faces;
        }
        let cells = faces.iter().map(|f| f.to_vec()).collect();
        Mesh::assemble(2, 3, vertices, cells, BTreeSet::new(), true, None)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn vertex(&self, i: usize) -> [f64; 3] {
        self.vertices[i]
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c]
    }

    pub fn boundary_nodes(&self) -> &BTreeSet<usize> {
        &self.boundary_nodes
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary_nodes.contains(&node)
    }

    /// Riemannian volume element of one cell.
    pub fn cell_volume(&self, c: usize) -> f64 {
        self.cell_volumes[c]
    }

    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volumes
    }

    /// Gradients of the P1 basis functions on one cell, in the cell frame;
    /// one `[f64; 2]` per local vertex (second component zero in 1D).
    pub fn basis_gradients(&self, c: usize) -> &[[f64; 2]] {
        &self.basis_gradients[c]
    }

    /// Total manifold volume ∫_M 1 dσ_g.
    pub fn volume(&self) -> f64 {
        kahan_sum(self.cell_volumes.iter().copied())
    }

    /// ∫_M v dσ_g for a cellwise-constant integrand, in fixed cell order with
    /// compensated summation.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.cells.len() {
            return Err(PlapError::invalid(format!(
                "integrate: got {} values for {} cells",
                values.len(),
                self.cells.len()
            )));
        }
        Ok(kahan_sum(
            values.iter().zip(&self.cell_volumes).map(|(v, vol)| v * vol),
        ))
    }

    /// ∫_M u dσ_g for the P1 interpolant of nodal values (exact).
    pub fn integrate_nodal(&self, nodal: &[f64]) -> f64 {
        kahan_sum(self.cells.iter().zip(&self.cell_volumes).map(|(cell, vol)| {
            let mean = cell.iter().map(|&v| nodal[v]).sum::<f64>() / cell.len() as f64;
            mean * vol
        }))
    }

    /// Applies the exact P1 mass matrix to nodal values: out_i = ∫ u φ_i dσ_g.
    pub fn mass_apply(&self, nodal: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (cell, &vol) in self.cells.iter().zip(&self.cell_volumes) {
            match cell.len() {
                2 => {
                    let (a, b) = (cell[0], cell[1]);
                    out[a] += vol / 6.0 * (2.0 * nodal[a] + nodal[b]);
                    out[b] += vol / 6.0 * (nodal[a] + 2.0 * nodal[b]);
                }
                3 => {
                    let s: f64 = cell.iter().map(|&v| nodal[v]).sum();
                    for &v in cell {
                        out[v] += vol / 12.0 * (s + nodal[v]);
                    }
                }
                _ => unreachable!("simplex cells only"),
            }
        }
    }

    /// Lumped mass (hat-function integrals): m_i = ∫ φ_i dσ_g.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_vertices()];
        for (cell, &vol) in self.cells.iter().zip(&self.cell_volumes) {
            let share = vol / cell.len() as f64;
            for &v in cell {
                m[v] += share;
            }
        }
        m
    }

    /// Volume-weighted mean of the P1 interpolant.
    pub fn mean(&self, nodal: &[f64]) -> f64 {
        self.integrate_nodal(nodal) / self.volume()
    }

    /// Per-node sorted adjacency (including the node itself); the sparsity
    /// pattern of P1 stiffness matrices.
    pub fn node_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.n_vertices()];
        for cell in &self.cells {
            for &a in cell {
                for &b in cell {
                    adj[a].insert(b);
                }
            }
        }
        adj.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Positions of the cell's vertices in its local frame, periodic
    /// coordinates unwrapped. 1D cells return the coordinate in `[i][0]`.
    pub fn cell_local_coords(&self, c: usize) -> Vec<[f64; 2]> {
        let cell = &self.cells[c];
        let pts: Vec<[f64; 3]> = cell.iter().map(|&v| self.unwrapped(cell[0], v)).collect();
        match self.dimension {
            1 => pts.iter().map(|p| [p[0], 0.0]).collect(),
            2 if self.embed_dim == 2 => pts.iter().map(|p| [p[0], p[1]]).collect(),
            2 => {
                // local orthonormal frame in the plane of the embedded triangle
                let e10 = sub3(pts[1], pts[0]);
                let e20 = sub3(pts[2], pts[0]);
                let n = cross3(e10, e20);
                let e1 = normalize3(e10);
                let e2 = normalize3(cross3(n, e1));
                pts.iter()
                    .map(|&p| {
                        let d = sub3(p, pts[0]);
                        [dot3(d, e1), dot3(d, e2)]
                    })
                    .collect()
            }
            _ => unreachable!(),
        }
    }

    fn unwrapped(&self, anchor: usize, v: usize) -> [f64; 3] {
        let mut p = self.vertices[v];
        if let Some(period) = &self.period {
            let a = self.vertices[anchor];
            for (d, &len) in period.iter().enumerate() {
                while p[d] - a[d] > len / 2.0 {
                    p[d] -= len;
                }
                while p[d] - a[d] < -len / 2.0 {
                    p[d] += len;
                }
            }
        }
        p
    }

    fn compute_cell_geometry(&mut self) -> Result<()> {
        let n_cells = self.cells.len();
        let mut volumes = Vec::with_capacity(n_cells);
        let mut grads = Vec::with_capacity(n_cells);
        for c in 0..n_cells {
            let cell = self.cells[c].clone();
            let expected = self.dimension + 1;
            if cell.len() != expected {
                return Err(PlapError::invalid(format!(
                    "cell {c} has {} vertices, expected {expected}",
                    cell.len()
                )));
            }
            for &v in &cell {
                if v >= self.vertices.len() {
                    return Err(PlapError::invalid(format!(
                        "cell {c}: index out of range ({v} >= {})",
                        self.vertices.len()
                    )));
                }
            }
            let q = self.cell_local_coords(c);
            match self.dimension {
                1 => {
                    let len = q[1][0] - q[0][0];
                    if len.abs() <= 0.0 {
                        return Err(PlapError::Degenerate(format!("cell {c} has zero length")));
                    }
                    volumes.push(len.abs());
                    grads.push(vec![[-1.0 / len, 0.0], [1.0 / len, 0.0]]);
                }
                2 => {
                    let e1 = [q[1][0] - q[0][0], q[1][1] - q[0][1]];
                    let e2 = [q[2][0] - q[0][0], q[2][1] - q[0][1]];
                    let det = e1[0] * e2[1] - e1[1] * e2[0];
                    if det.abs() <= 0.0 {
                        return Err(PlapError::Degenerate(format!("cell {c} has zero area")));
                    }
                    volumes.push(det.abs() / 2.0);
                    let g1 = [e2[1] / det, -e2[0] / det];
                    let g2 = [-e1[1] / det, e1[0] / det];
                    let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
                    grads.push(vec![g0, g1, g2]);
                }
                d => return Err(PlapError::invalid(format!("unsupported dimension {d}"))),
            }
        }
        self.cell_volumes = volumes;
        self.basis_gradients = grads;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.vertices.is_empty() {
            return Err(PlapError::invalid("mesh has no cells or no vertices"));
        }
        if self.closed != self.boundary_nodes.is_empty() {
            return Err(PlapError::invalid(
                "boundary_nodes must be empty exactly for closed meshes",
            ));
        }
        for &b in &self.boundary_nodes {
            if b >= self.vertices.len() {
                return Err(PlapError::invalid(format!(
                    "boundary node {b} out of range"
                )));
            }
        }
        let vol = self.volume();
        if !(vol.is_finite() && vol > 0.0) {
            return Err(PlapError::Degenerate("non-positive total volume".into()));
        }
        // connectivity of the cell adjacency graph via shared vertices
        let mut vertex_cells: Vec<Vec<usize>> = vec![Vec::new(); self.n_vertices()];
        for (c, cell) in self.cells.iter().enumerate() {
            for &v in cell {
                vertex_cells[v].push(c);
            }
        }
        let mut seen = vec![false; self.n_cells()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(c) = stack.pop() {
            for &v in &self.cells[c] {
                for &c2 in &vertex_cells[v] {
                    if !seen[c2] {
                        seen[c2] = true;
                        stack.push(c2);
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(PlapError::invalid("cell adjacency graph is disconnected"));
        }
        Ok(())
    }

    /// Writes the mesh in the PLAPMESH text format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "PLAPMESH v1 dim={} closed={}",
            self.dimension,
            if self.closed { 1 } else { 0 }
        )
        .unwrap();
        if let Some(period) = &self.period {
            let joined: Vec<String> = period.iter().map(|v| fmt17(*v)).collect();
            write!(s, " period={}", joined.join(",")).unwrap();
        }
        s.push('\n');
        writeln!(s, "{} {}", self.n_vertices(), self.n_cells()).unwrap();
        for v in &self.vertices {
            let coords: Vec<String> = v[..self.embed_dim].iter().map(|x| fmt17(*x)).collect();
            writeln!(s, "{}", coords.join(" ")).unwrap();
        }
        for cell in &self.cells {
            let idx: Vec<String> = cell.iter().map(|i| i.to_string()).collect();
            writeln!(s, "{}", idx.join(" ")).unwrap();
        }
        if !self.boundary_nodes.is_empty() {
            let idx: Vec<String> = self.boundary_nodes.iter().map(|i| i.to_string()).collect();
            writeln!(s, "boundary {}", idx.join(" ")).unwrap();
        }
        s
    }

    /// Loads a mesh from the PLAPMESH text format.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Mesh::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: &str| PlapError::MeshParse {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

        let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() < 4 || tokens[0] != "PLAPMESH" || tokens[1] != "v1" {
            return Err(parse_err(hline + 1, "missing header"));
        }
        let dim: usize = tokens[2]
            .strip_prefix("dim=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(hline + 1, "bad dim field"))?;
        if dim != 1 && dim != 2 {
            return Err(parse_err(hline + 1, "dim must be 1 or 2"));
        }
        let closed = match tokens[3].strip_prefix("closed=") {
            Some("0") => false,
            Some("1") => true,
            _ => return Err(parse_err(hline + 1, "bad closed field")),
        };
        let mut period = None;
        for tok in &tokens[4..] {
            if let Some(rest) = tok.strip_prefix("period=") {
                let vals: std::result::Result<Vec<f64>, _> =
                    rest.split(',').map(|s| s.parse::<f64>()).collect();
                period = Some(vals.map_err(|_| parse_err(hline + 1, "bad period field"))?);
            } else {
                return Err(parse_err(hline + 1, "unknown header token"));
            }
        }

        let (cline, counts) = lines.next().ok_or_else(|| parse_err(hline + 2, "missing counts line"))?;
        let counts: Vec<&str> = counts.split_whitespace().collect();
        if counts.len() != 2 {
            return Err(parse_err(cline + 1, "counts line must be `<n_vertices> <n_cells>`"));
        }
        let n_vertices: usize = counts[0]
            .parse()
            .map_err(|_| parse_err(cline + 1, "bad vertex count"))?;
        let n_cells: usize = counts[1]
            .parse()
            .map_err(|_| parse_err(cline + 1, "bad cell count"))?;

        let mut vertices = Vec::with_capacity(n_vertices);
        let mut embed_dim = 0usize;
        for _ in 0..n_vertices {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(cline + 2, "unexpected end of file in vertex block"))?;
            let coords: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(|s| s.parse::<f64>()).collect();
            let coords = coords.map_err(|_| parse_err(ln + 1, "bad vertex coordinate"))?;
            if coords.is_empty() || coords.len() > 3 {
                return Err(parse_err(ln + 1, "vertex must have 1..=3 coordinates"));
            }
            if embed_dim == 0 {
                embed_dim = coords.len();
            } else if coords.len() != embed_dim {
                return Err(parse_err(ln + 1, "inconsistent vertex coordinate count"));
            }
            let mut p = [0.0; 3];
            p[..coords.len()].copy_from_slice(&coords);
            vertices.push(p);
        }

        let mut cells = Vec::with_capacity(n_cells);
        for _ in 0..n_cells {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(cline + 2, "unexpected end of file in cell block"))?;
            let idx: std::result::Result<Vec<usize>, _> =
                line.split_whitespace().map(|s| s.parse::<usize>()).collect();
            let idx = idx.map_err(|_| parse_err(ln + 1, "bad cell index"))?;
            if idx.len() != dim + 1 {
                return Err(parse_err(ln + 1, "wrong number of cell vertices"));
            }
            for &v in &idx {
                if v >= n_vertices {
                    return Err(parse_err(ln + 1, "index out of range"));
                }
            }
            cells.push(idx);
        }

        let mut boundary = BTreeSet::new();
        if let Some((ln, line)) = lines.next() {
            let mut toks = line.split_whitespace();
            if toks.next() != Some("boundary") {
                return Err(parse_err(ln + 1, "expected `boundary` line"));
            }
            for tok in toks {
                let v: usize = tok
                    .parse()
                    .map_err(|_| parse_err(ln + 1, "bad boundary index"))?;
                if v >= n_vertices {
                    return Err(parse_err(ln + 1, "index out of range"));
                }
                boundary.insert(v);
            }
        }
        if let Some((ln, _)) = lines.next() {
            return Err(parse_err(ln + 1, "trailing content after mesh"));
        }

        Mesh::assemble(dim, embed_dim, vertices, cells, boundary, closed, period)
    }
}

/// Quadrature rule in barycentric coordinates on the reference simplex.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Barycentric midpoint rule, exact for affine integrands.
    pub fn midpoint(dimension: usize) -> Self {
        let k = dimension + 1;
        QuadratureRule {
            points: vec![vec![1.0 / k as f64; k]],
            weights: vec![1.0],
        }
    }

    /// Degree-2 rule: Simpson in 1D, edge midpoints in 2D.
    pub fn three_point(dimension: usize) -> Self {
        match dimension {
            1 => QuadratureRule {
                points: vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]],
                weights: vec![1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0],
            },
            2 => QuadratureRule {
                points: vec![
                    vec![0.5, 0.5, 0.0],
                    vec![0.0, 0.5, 0.5],
                    vec![0.5, 0.0, 0.5],
                ],
                weights: vec![1.0 / 3.0; 3],
            },
            d => panic!("unsupported dimension {d}"),
        }
    }
}

pub(crate) fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let term = v - c;
        let t = sum + term;
        c = (t - sum) - term;
        sum = t;
    }
    sum
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize3(a: [f64; 3]) -> [f64; 3] {
    let n = dot3(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

pub(crate) fn fmt17(v: f64) -> String {
    format!("{:.16e}", v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_mesh_basics() {
        let m = Mesh::interval(4, 1.0).unwrap();
        assert_eq!(m.n_vertices(), 5);
        assert_eq!(m.n_cells(), 4);
        for c in 0..4 {
            assert!((m.cell_volume(c) - 0.25).abs() < 1e-15);
        }
        let m2 = Mesh::interval(2, 2.0).unwrap();
        assert!((m2.volume() - 2.0).abs() < 1e-15);
        let m3 = Mesh::interval(100, 1.0).unwrap();
        let b: Vec<usize> = m3.boundary_nodes().iter().copied().collect();
        assert_eq!(b, vec![0, 100]);
        assert!(Mesh::interval(1, 1.0).is_err());
        assert!(Mesh::interval(4, 0.0).is_err());
    }

    #[test]
    fn torus_mesh_basics() {
        let m = Mesh::flat_torus(4, 4, 1.0, 1.0).unwrap();
        assert_eq!(m.n_vertices(), 16);
        assert_eq!(m.n_cells(), 32);
        assert!((m.volume() - 1.0).abs() < 1e-13);
        assert!(m.boundary_nodes().is_empty());
        let m2 = Mesh::flat_torus(3, 3, 2.0, 1.0).unwrap();
        assert!((m2.volume() - 2.0).abs() < 1e-13);
        assert!(Mesh::flat_torus(2, 4, 1.0, 1.0).is_err());
    }

    #[test]
    fn icosphere_combinatorics_and_volume() {
        let m0 = Mesh::icosphere(0, 1.0).unwrap();
        assert_eq!(m0.n_vertices(), 12);
        assert_eq!(m0.n_cells(), 20);
        let m1 = Mesh::icosphere(1, 1.0).unwrap();
        assert_eq!(m1.n_cells(), 4 * m0.n_cells());

        let target = 4.0 * std::f64::consts::PI;
        let m3 = Mesh::icosphere(3, 1.0).unwrap();
        assert!((m3.volume() - target).abs() / target < 0.02);

        // flat-area deficit shrinks monotonically with refinement
        let mut prev = f64::INFINITY;
        for k in 0..=4 {
            let err = (Mesh::icosphere(k, 1.0).unwrap().volume() - target).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(Mesh::icosphere(9, 1.0).is_err());
    }

    #[test]
    fn integrate_is_measure_consistent() {
        let m = Mesh::interval(4, 1.0).unwrap();
        assert!((m.integrate(&vec![1.0; 4]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(m.integrate(&vec![0.0; 4]).unwrap(), 0.0);
        // indicator of half the cells of a unit-volume mesh
        let half = vec![1.0, 1.0, 0.0, 0.0];
        assert!((m.integrate(&half).unwrap() - 0.5).abs() < 1e-15);
        assert!(m.integrate(&[1.0]).is_err());
    }

    #[test]
    fn integrate_linear_and_monotone() {
        let m = Mesh::flat_torus(4, 5, 1.0, 2.0).unwrap();
        let a: Vec<f64> = (0..m.n_cells()).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..m.n_cells()).map(|i| (i as f64 * 0.3).cos()).collect();
        let lin: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
        let lhs = m.integrate(&lin).unwrap();
        let rhs = 2.0 * m.integrate(&a).unwrap() - 3.0 * m.integrate(&b).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        let pos: Vec<f64> = a.iter().map(|x| x.abs()).collect();
        assert!(m.integrate(&pos).unwrap() >= 0.0);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for mesh in [
            Mesh::interval(4, 1.0).unwrap(),
            Mesh::flat_torus(4, 4, 1.0, 1.0).unwrap(),
            Mesh::icosphere(1, 2.0).unwrap(),
        ] {
            let path = dir.path().join("m.plapmesh");
            mesh.save(&path).unwrap();
            let loaded = Mesh::load(&path).unwrap();
            assert_eq!(mesh, loaded);
            assert!((mesh.volume() - loaded.volume()).abs() / mesh.volume() < 1e-12);
        }
    }

    #[test]
    fn load_rejects_malformed_input() {
        let err = Mesh::from_text("").unwrap_err();
        assert!(err.to_string().contains("missing header"));

        let bad_index = "PLAPMESH v1 dim=1 closed=0\n3 2\n0.0\n0.5\n1.0\n0 1\n1 7\nboundary 0 2\n";
        let err = Mesh::from_text(bad_index).unwrap_err();
        assert!(err.to_string().contains("index out of range"));

        let degenerate = "PLAPMESH v1 dim=1 closed=0\n3 2\n0.0\n0.0\n1.0\n0 1\n1 2\nboundary 0 2\n";
        assert!(Mesh::from_text(degenerate).is_err());
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        for dim in [1, 2] {
            for rule in [QuadratureRule::midpoint(dim), QuadratureRule::three_point(dim)] {
                let s: f64 = rule.weights.iter().sum();
                assert!((s - 1.0).abs() < 1e-15);
                assert!(rule.weights.iter().all(|&w| w > 0.0));
            }
        }
    }
}
