//! Structured fine mesh, fractures embedded along fine-grid edges, the coarse
//! partition, oversampled regions, and the per-block continuum enumeration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{NlmcError, Result};

/// Uniform square-cell mesh of `[0, lx] × [0, ly]`.
///
/// Nodes are numbered lexicographically with x fastest: node `(i, j)` has index
/// `j * (nx + 1) + i`. Cell `(i, j)` has index `j * nx + i` and corners
/// `(i, j), (i+1, j), (i+1, j+1), (i, j+1)` in counter-clockwise order.
#[derive(Clone, Debug, PartialEq)]
pub struct FineMesh {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub h: f64,
}

impl FineMesh {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(NlmcError::InvalidMesh(format!("cell counts must be positive, got {nx}x{ny}")));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(NlmcError::InvalidMesh(format!("domain extents must be positive, got {lx}x{ly}")));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        if (hx - hy).abs() > 1e-12 * hx.max(hy) {
            return Err(NlmcError::AspectRatio { hx, hy });
        }
        Ok(Self { nx, ny, lx, ly, h: hx })
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Horizontal plus vertical cell edges.
    pub fn n_edges(&self) -> usize {
        self.nx * (self.ny + 1) + (self.nx + 1) * self.ny
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn node_ij(&self, n: usize) -> (usize, usize) {
        (n % (self.nx + 1), n / (self.nx + 1))
    }

    pub fn coords(&self, n: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(n);
        [i as f64 * self.h, j as f64 * self.h]
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    pub fn cell_nodes(&self, c: usize) -> [usize; 4] {
        let (i, j) = self.cell_ij(c);
        [self.node(i, j), self.node(i + 1, j), self.node(i + 1, j + 1), self.node(i, j + 1)]
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.cell_ij(c);
        [(i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h]
    }

    /// Horizontal edges come first (`j * nx + i` joins `(i, j)`–`(i+1, j)`), then
    /// vertical edges (`(i, j)`–`(i, j+1)`).
    pub fn edge_nodes(&self, e: usize) -> [usize; 2] {
        let n_h = self.nx * (self.ny + 1);
        if e < n_h {
            let (i, j) = (e % self.nx, e / self.nx);
            [self.node(i, j), self.node(i + 1, j)]
        } else {
            let e = e - n_h;
            let (i, j) = (e % (self.nx + 1), e / (self.nx + 1));
            [self.node(i, j), self.node(i, j + 1)]
        }
    }

    /// Cells having both endpoints of edge `e` among their corners.
    pub fn cells_of_edge(&self, e: usize) -> Vec<usize> {
        let [a, b] = self.edge_nodes(e);
        let (ia, ja) = self.node_ij(a);
        let (ib, jb) = self.node_ij(b);
        let mut out = Vec::new();
        for cj in ja.min(jb).saturating_sub(1)..=ja.max(jb).min(self.ny - 1) {
            for ci in ia.min(ib).saturating_sub(1)..=ia.max(ib).min(self.nx - 1) {
                let nodes = self.cell_nodes(self.cell(ci, cj));
                if nodes.contains(&a) && nodes.contains(&b) {
                    out.push(self.cell(ci, cj));
                }
            }
        }
        out
    }

    pub fn is_boundary_node(&self, n: usize) -> bool {
        let (i, j) = self.node_ij(n);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    fn contains_point(&self, p: [f64; 2]) -> bool {
        let tol = 1e-12 * self.lx.max(self.ly);
        p[0] >= -tol && p[0] <= self.lx + tol && p[1] >= -tol && p[1] <= self.ly + tol
    }

    fn nearest_ij(&self, p: [f64; 2]) -> (usize, usize) {
        let i = (p[0] / self.h).round().clamp(0.0, self.nx as f64) as usize;
        let j = (p[1] / self.h).round().clamp(0.0, self.ny as f64) as usize;
        (i, j)
    }
}

/// One segment between neighbouring fine nodes along a fracture (a cell edge or a
/// cell diagonal).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractureEdge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
    pub fracture: usize,
}

impl FractureEdge {
    fn key(&self) -> (usize, usize) {
        (self.a.min(self.b), self.a.max(self.b))
    }
}

/// A fracture snapped to the fine grid: a polyline of fine nodes whose
/// consecutive pairs are cell edges or cell diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct Fracture {
    pub id: usize,
    pub nodes: Vec<usize>,
    /// Effective conductivity: aperture times fracture permeability.
    pub conductivity: f64,
}

impl Fracture {
    pub fn edges<'a>(&'a self, mesh: &'a FineMesh) -> impl Iterator<Item = FractureEdge> + 'a {
        self.nodes.windows(2).map(move |w| {
            let (ia, ja) = mesh.node_ij(w[0]);
            let (ib, jb) = mesh.node_ij(w[1]);
            let diagonal = ia != ib && ja != jb;
            let length = if diagonal { mesh.h * std::f64::consts::SQRT_2 } else { mesh.h };
            FractureEdge { a: w[0], b: w[1], length, fracture: self.id }
        })
    }

    pub fn length(&self, mesh: &FineMesh) -> f64 {
        self.edges(mesh).map(|e| e.length).sum()
    }
}

/// Snaps the segment `p0`–`p1` to the nearest fine nodes and traces it along
/// cell edges (axis-aligned) or cell diagonals (45°).
pub fn snap_fracture(mesh: &FineMesh, p0: [f64; 2], p1: [f64; 2], conductivity: f64) -> Result<Fracture> {
    for p in [p0, p1] {
        if !mesh.contains_point(p) {
            return Err(NlmcError::FractureOutsideDomain { x: p[0], y: p[1] });
        }
    }
    let (i0, j0) = mesh.nearest_ij(p0);
    let (i1, j1) = mesh.nearest_ij(p1);
    let di = i1 as i64 - i0 as i64;
    let dj = j1 as i64 - j0 as i64;
    if di == 0 && dj == 0 {
        return Err(NlmcError::DegenerateFracture(format!(
            "({}, {})-({}, {}) with h = {}",
            p0[0], p0[1], p1[0], p1[1], mesh.h
        )));
    }
    if di != 0 && dj != 0 && di.abs() != dj.abs() {
        return Err(NlmcError::FractureOrientation { di, dj });
    }
    let steps = di.abs().max(dj.abs());
    let (si, sj) = (di.signum(), dj.signum());
    let nodes = (0..=steps)
        .map(|k| mesh.node((i0 as i64 + k * si) as usize, (j0 as i64 + k * sj) as usize))
        .collect();
    Ok(Fracture { id: 0, nodes, conductivity })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FractureNetwork {
    pub fractures: Vec<Fracture>,
}

impl FractureNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a fracture and assigns it the next id.
    pub fn push(&mut self, mut fracture: Fracture) -> usize {
        let id = self.fractures.len();
        fracture.id = id;
        self.fractures.push(fracture);
        id
    }

    pub fn add_segment(&mut self, mesh: &FineMesh, p0: [f64; 2], p1: [f64; 2], conductivity: f64) -> Result<usize> {
        Ok(self.push(snap_fracture(mesh, p0, p1, conductivity)?))
    }

    pub fn is_empty(&self) -> bool {
        self.fractures.is_empty()
    }

    pub fn edges<'a>(&'a self, mesh: &'a FineMesh) -> impl Iterator<Item = FractureEdge> + 'a {
        self.fractures.iter().flat_map(move |f| f.edges(mesh))
    }

    pub fn node_set(&self) -> BTreeSet<usize> {
        self.fractures.iter().flat_map(|f| f.nodes.iter().copied()).collect()
    }
}

/// Inclusive rectangle of fine-node indices `[i0, i1] × [j0, j1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRect {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl NodeRect {
    pub fn width(&self) -> usize {
        self.i1 - self.i0 + 1
    }

    pub fn height(&self) -> usize {
        self.j1 - self.j0 + 1
    }

    pub fn len(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.i0 && i <= self.i1 && j >= self.j0 && j <= self.j1
    }

    pub fn on_boundary(&self, i: usize, j: usize) -> bool {
        self.contains(i, j) && (i == self.i0 || i == self.i1 || j == self.j0 || j == self.j1)
    }

    pub fn intersect(&self, other: &NodeRect) -> Option<NodeRect> {
        let r = NodeRect {
            i0: self.i0.max(other.i0),
            i1: self.i1.min(other.i1),
            j0: self.j0.max(other.j0),
            j1: self.j1.min(other.j1),
        };
        (r.i0 <= r.i1 && r.j0 <= r.j1).then_some(r)
    }

    /// Position of node `(i, j)` in the row-major (x fastest) layout of the rectangle.
    #[inline]
    pub fn local(&self, i: usize, j: usize) -> usize {
        (j - self.j0) * self.width() + (i - self.i0)
    }

    /// Global node indices, x fastest.
    pub fn nodes(&self, mesh: &FineMesh) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for j in self.j0..=self.j1 {
            for i in self.i0..=self.i1 {
                out.push(mesh.node(i, j));
            }
        }
        out
    }
}

/// Conforming coarse partition: every block is `rx × ry` fine cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseGrid {
    pub nx: usize,
    pub ny: usize,
    pub rx: usize,
    pub ry: usize,
    /// Coarse cell size `H`.
    pub h: f64,
    fine_h: f64,
}

impl CoarseGrid {
    pub fn new(mesh: &FineMesh, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(NlmcError::InvalidCoarseGrid(format!("block counts must be positive, got {nx}x{ny}")));
        }
        if mesh.nx % nx != 0 || mesh.ny % ny != 0 {
            return Err(NlmcError::InvalidCoarseGrid(format!(
                "fine mesh {}x{} is not a refinement of {nx}x{ny}",
                mesh.nx, mesh.ny
            )));
        }
        let rx = mesh.nx / nx;
        let ry = mesh.ny / ny;
        if rx != ry {
            return Err(NlmcError::InvalidCoarseGrid(format!("coarse blocks must be square ({rx}x{ry} cells)")));
        }
        Ok(Self { nx, ny, rx, ry, h: rx as f64 * mesh.h, fine_h: mesh.h })
    }

    pub fn n_blocks(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn block(&self, bi: usize, bj: usize) -> usize {
        bj * self.nx + bi
    }

    #[inline]
    pub fn block_ij(&self, b: usize) -> (usize, usize) {
        (b % self.nx, b / self.nx)
    }

    pub fn block_area(&self) -> f64 {
        (self.rx as f64 * self.fine_h) * (self.ry as f64 * self.fine_h)
    }

    /// Closed node rectangle of block `b`.
    pub fn block_nodes_rect(&self, b: usize) -> NodeRect {
        let (bi, bj) = self.block_ij(b);
        NodeRect { i0: bi * self.rx, i1: (bi + 1) * self.rx, j0: bj * self.ry, j1: (bj + 1) * self.ry }
    }

    pub fn block_nodes(&self, mesh: &FineMesh, b: usize) -> Vec<usize> {
        self.block_nodes_rect(b).nodes(mesh)
    }

    pub fn block_cells(&self, mesh: &FineMesh, b: usize) -> Vec<usize> {
        let (bi, bj) = self.block_ij(b);
        let mut out = Vec::with_capacity(self.rx * self.ry);
        for j in bj * self.ry..(bj + 1) * self.ry {
            for i in bi * self.rx..(bi + 1) * self.rx {
                out.push(mesh.cell(i, j));
            }
        }
        out
    }

    pub fn block_of_cell(&self, mesh: &FineMesh, c: usize) -> usize {
        let (i, j) = mesh.cell_ij(c);
        self.block(i / self.rx, j / self.ry)
    }

    /// Chebyshev distance between blocks in block units.
    pub fn block_distance(&self, a: usize, b: usize) -> usize {
        let (ai, aj) = self.block_ij(a);
        let (bi, bj) = self.block_ij(b);
        ai.abs_diff(bi).max(aj.abs_diff(bj))
    }
}

/// Number of oversampling layers, or the whole domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Layers {
    Count(usize),
    #[serde(with = "global_tag")]
    Global,
}

mod global_tag {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("global")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s.eq_ignore_ascii_case("global") {
            Ok(())
        } else {
            Err(de::Error::custom(format!("expected a layer count or \"global\", got {s:?}")))
        }
    }
}

impl fmt::Display for Layers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layers::Count(n) => write!(f, "{n}"),
            Layers::Global => write!(f, "global"),
        }
    }
}

impl std::str::FromStr for Layers {
    type Err = NlmcError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("global") {
            return Ok(Layers::Global);
        }
        s.parse::<usize>()
            .map(Layers::Count)
            .map_err(|_| NlmcError::InvalidArgument(format!("invalid layer count {s:?}")))
    }
}

/// Coarse block `center` enlarged by `layers` rings of neighbouring blocks
/// (node-neighbour growth), clipped to the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct OversampleRegion {
    pub center: usize,
    pub layers: Layers,
    /// Inclusive block-index bounds `(bi0, bi1, bj0, bj1)`.
    pub block_bounds: (usize, usize, usize, usize),
    /// Member blocks `I_i`, ascending.
    pub blocks: Vec<usize>,
    /// Closed node rectangle covered by the region.
    pub nodes: NodeRect,
    /// Whether the region reaches the physical boundary on the left, right, bottom, top.
    pub touches_boundary: [bool; 4],
}

impl OversampleRegion {
    /// True if node `(i, j)` lies on the region boundary but not on the physical boundary.
    pub fn is_artificial_boundary(&self, i: usize, j: usize) -> bool {
        let r = &self.nodes;
        if !r.on_boundary(i, j) {
            return false;
        }
        (i == r.i0 && !self.touches_boundary[0])
            || (i == r.i1 && !self.touches_boundary[1])
            || (j == r.j0 && !self.touches_boundary[2])
            || (j == r.j1 && !self.touches_boundary[3])
    }

    pub fn boundary_nodes(&self, mesh: &FineMesh) -> Vec<usize> {
        self.nodes.nodes(mesh).into_iter().filter(|&n| {
            let (i, j) = mesh.node_ij(n);
            self.nodes.on_boundary(i, j)
        }).collect()
    }

    pub fn interior_nodes(&self, mesh: &FineMesh) -> Vec<usize> {
        self.nodes.nodes(mesh).into_iter().filter(|&n| {
            let (i, j) = mesh.node_ij(n);
            !self.nodes.on_boundary(i, j)
        }).collect()
    }

    pub fn artificial_boundary_nodes(&self, mesh: &FineMesh) -> Vec<usize> {
        self.nodes.nodes(mesh).into_iter().filter(|&n| {
            let (i, j) = mesh.node_ij(n);
            self.is_artificial_boundary(i, j)
        }).collect()
    }

    pub fn is_whole_domain(&self) -> bool {
        self.touches_boundary.iter().all(|&t| t)
    }

    pub fn contains_block(&self, b: usize) -> bool {
        self.blocks.binary_search(&b).is_ok()
    }
}

pub fn oversample(coarse: &CoarseGrid, center: usize, layers: Layers) -> OversampleRegion {
    let (bi, bj) = coarse.block_ij(center);
    let (bi0, bi1, bj0, bj1) = match layers {
        Layers::Global => (0, coarse.nx - 1, 0, coarse.ny - 1),
        Layers::Count(l) => (
            bi.saturating_sub(l),
            (bi + l).min(coarse.nx - 1),
            bj.saturating_sub(l),
            (bj + l).min(coarse.ny - 1),
        ),
    };
    let mut blocks = Vec::with_capacity((bi1 - bi0 + 1) * (bj1 - bj0 + 1));
    for j in bj0..=bj1 {
        for i in bi0..=bi1 {
            blocks.push(coarse.block(i, j));
        }
    }
    let nodes = NodeRect {
        i0: bi0 * coarse.rx,
        i1: (bi1 + 1) * coarse.rx,
        j0: bj0 * coarse.ry,
        j1: (bj1 + 1) * coarse.ry,
    };
    OversampleRegion {
        center,
        layers,
        block_bounds: (bi0, bi1, bj0, bj1),
        blocks,
        nodes,
        touches_boundary: [bi0 == 0, bi1 == coarse.nx - 1, bj0 == 0, bj1 == coarse.ny - 1],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContinuumKind {
    Matrix,
    /// One connected fracture network clipped to the closed block.
    Fracture { edges: Vec<FractureEdge>, nodes: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Continuum {
    pub block: usize,
    /// 0 for the matrix, 1..=L_j for fracture networks.
    pub local: usize,
    pub kind: ContinuumKind,
}

impl Continuum {
    pub fn is_matrix(&self) -> bool {
        matches!(self.kind, ContinuumKind::Matrix)
    }
}

/// Flat enumeration of (block, continuum) pairs; block-major, matrix first.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuumIndex {
    entries: Vec<Continuum>,
    offsets: Vec<usize>,
}

impl ContinuumIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn get(&self, k: usize) -> &Continuum {
        &self.entries[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Continuum> {
        self.entries.iter()
    }

    pub fn index(&self, block: usize, local: usize) -> usize {
        debug_assert!(local <= self.fracture_count(block));
        self.offsets[block] + local
    }

    pub fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    /// `L_j`
    pub fn fracture_count(&self, block: usize) -> usize {
        self.offsets[block + 1] - self.offsets[block] - 1
    }

    pub fn matrix_mask(&self) -> Vec<bool> {
        self.entries.iter().map(Continuum::is_matrix).collect()
    }
}

/// Groups fracture edges clipped to each closed block into connected components.
/// An edge lying on a block interface belongs to both adjacent blocks.
pub fn enumerate_continua(mesh: &FineMesh, coarse: &CoarseGrid, fractures: &FractureNetwork) -> ContinuumIndex {
    let mut per_block: Vec<BTreeMap<(usize, usize), FractureEdge>> = vec![BTreeMap::new(); coarse.n_blocks()];
    for e in fractures.edges(mesh) {
        let (ia, ja) = mesh.node_ij(e.a);
        let (ib, jb) = mesh.node_ij(e.b);
        let (imin, imax) = (ia.min(ib), ia.max(ib));
        let (jmin, jmax) = (ja.min(jb), ja.max(jb));
        // blocks whose closed node range contains [imin, imax] × [jmin, jmax]
        let bi_lo = imax.div_ceil(coarse.rx).saturating_sub(1);
        let bi_hi = (imin / coarse.rx).min(coarse.nx - 1);
        let bj_lo = jmax.div_ceil(coarse.ry).saturating_sub(1);
        let bj_hi = (jmin / coarse.ry).min(coarse.ny - 1);
        for bj in bj_lo..=bj_hi {
            for bi in bi_lo..=bi_hi {
                let b = coarse.block(bi, bj);
                let rect = coarse.block_nodes_rect(b);
                if rect.contains(ia, ja) && rect.contains(ib, jb) {
                    per_block[b].entry(e.key()).or_insert(e);
                }
            }
        }
    }

    let mut entries = Vec::new();
    let mut offsets = Vec::with_capacity(coarse.n_blocks() + 1);
    for (b, edges) in per_block.into_iter().enumerate() {
        offsets.push(entries.len());
        entries.push(Continuum { block: b, local: 0, kind: ContinuumKind::Matrix });
        if edges.is_empty() {
            continue;
        }
        let nodes: Vec<usize> = edges.keys().flat_map(|&(a, b)| [a, b]).collect::<BTreeSet<_>>().into_iter().collect();
        let pos = |n: usize| nodes.binary_search(&n).unwrap();
        let mut uf = UnionFind::<usize>::new(nodes.len());
        for &(a, b) in edges.keys() {
            uf.union(pos(a), pos(b));
        }
        // component label -> (edges, nodes), ordered by smallest node index
        let mut comps: BTreeMap<usize, (Vec<FractureEdge>, Vec<usize>)> = BTreeMap::new();
        let mut root_to_min: BTreeMap<usize, usize> = BTreeMap::new();
        for (p, &n) in nodes.iter().enumerate() {
            root_to_min.entry(uf.find(p)).or_insert(n);
        }
        for (p, &n) in nodes.iter().enumerate() {
            comps.entry(root_to_min[&uf.find(p)]).or_default().1.push(n);
        }
        for (&(a, _), e) in &edges {
            comps.get_mut(&root_to_min[&uf.find(pos(a))]).unwrap().0.push(*e);
        }
        for (m, (_, (edges, nodes))) in comps.into_iter().enumerate() {
            entries.push(Continuum { block: b, local: m + 1, kind: ContinuumKind::Fracture { edges, nodes } });
        }
    }
    offsets.push(entries.len());
    ContinuumIndex { entries, offsets }
}

/// Rejects coarse blocks whose every node carries a fracture.
pub fn check_blocks(mesh: &FineMesh, coarse: &CoarseGrid, fractures: &FractureNetwork) -> Result<()> {
    let frac_nodes = fractures.node_set();
    if frac_nodes.is_empty() {
        return Ok(());
    }
    for b in 0..coarse.n_blocks() {
        if coarse.block_nodes(mesh, b).iter().all(|n| frac_nodes.contains(n)) {
            return Err(NlmcError::DegenerateBlock(b));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> FineMesh {
        FineMesh::new(n, n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn mesh_counts() {
        let m = unit(1);
        assert_eq!((m.n_nodes(), m.n_cells(), m.n_edges()), (4, 1, 4));
        let m = unit(2);
        assert_eq!((m.n_nodes(), m.n_cells(), m.n_edges()), (9, 4, 12));
    }

    #[test]
    fn large_mesh_node_count_matches_enumeration() {
        let m = unit(100);
        let mut count = 0;
        for c in 0..m.n_cells() {
            for n in m.cell_nodes(c) {
                let (i, j) = m.node_ij(n);
                // count each node once, from its lower-left owning cell or the last row/column
                let (ci, cj) = m.cell_ij(c);
                let owner = (i == ci || (i == m.nx && ci == m.nx - 1)) && (j == cj || (j == m.ny && cj == m.ny - 1));
                if owner {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 10201);
        assert_eq!(m.n_nodes(), 10201);
    }

    #[test]
    fn non_square_cells_rejected() {
        assert!(matches!(FineMesh::new(10, 10, 1.0, 2.0), Err(NlmcError::AspectRatio { .. })));
    }

    #[test]
    fn every_edge_has_at_most_two_cells() {
        let m = FineMesh::new(5, 3, 5.0, 3.0).unwrap();
        for e in 0..m.n_edges() {
            let k = m.cells_of_edge(e).len();
            assert!((1..=2).contains(&k), "edge {e} has {k} cells");
        }
    }

    #[test]
    fn horizontal_fracture_snaps_to_51_nodes() {
        let m = unit(100);
        let f = snap_fracture(&m, [0.25, 0.5], [0.75, 0.5], 100.0).unwrap();
        assert_eq!(f.nodes.len(), 51);
        assert!(f.nodes.iter().all(|&n| m.node_ij(n).1 == 50));
        assert!((f.length(&m) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn diagonal_fracture_snaps_to_11_nodes() {
        let m = unit(100);
        let f = snap_fracture(&m, [0.0, 0.0], [0.1, 0.1], 1.0).unwrap();
        assert_eq!(f.nodes.len(), 11);
        for (k, &n) in f.nodes.iter().enumerate() {
            assert_eq!(m.node_ij(n), (k, k));
        }
    }

    #[test]
    fn degenerate_and_oblique_fractures_rejected() {
        let m = unit(100);
        assert!(matches!(snap_fracture(&m, [0.3, 0.3], [0.3, 0.3], 1.0), Err(NlmcError::DegenerateFracture(_))));
        assert!(matches!(snap_fracture(&m, [0.3, 0.3], [0.3041, 0.3], 1.0), Err(NlmcError::DegenerateFracture(_))));
        let err = snap_fracture(&m, [0.0, 0.0], [0.2, 0.1], 1.0).unwrap_err();
        assert!(err.to_string().contains("horizontal, vertical and 45-degree diagonal"));
        assert!(matches!(snap_fracture(&m, [0.0, 0.0], [1.2, 0.0], 1.0), Err(NlmcError::FractureOutsideDomain { .. })));
    }

    #[test]
    fn matrix_only_continua() {
        let m = unit(20);
        let c = CoarseGrid::new(&m, 10, 10).unwrap();
        let idx = enumerate_continua(&m, &c, &FractureNetwork::new());
        assert_eq!(idx.len(), 100);
        assert!(idx.iter().all(Continuum::is_matrix));
    }

    #[test]
    fn fracture_across_a_row_of_blocks() {
        let m = unit(100);
        let c = CoarseGrid::new(&m, 10, 10).unwrap();
        let mut net = FractureNetwork::new();
        net.add_segment(&m, [0.0, 0.55], [1.0, 0.55], 100.0).unwrap();
        let idx = enumerate_continua(&m, &c, &net);
        assert_eq!(idx.len(), 110);
        for b in 0..100 {
            let expect = usize::from(c.block_ij(b).1 == 5);
            assert_eq!(idx.fracture_count(b), expect, "block {b}");
        }
    }

    #[test]
    fn crossing_fractures_form_one_component() {
        let m = unit(100);
        let c = CoarseGrid::new(&m, 10, 10).unwrap();
        let mut net = FractureNetwork::new();
        net.add_segment(&m, [0.52, 0.55], [0.58, 0.55], 1.0).unwrap();
        net.add_segment(&m, [0.55, 0.52], [0.55, 0.58], 1.0).unwrap();
        let idx = enumerate_continua(&m, &c, &net);
        assert_eq!(idx.fracture_count(c.block(5, 5)), 1);
        assert_eq!(idx.len(), 101);
        // two disjoint pieces in one block are two continua
        let mut net = FractureNetwork::new();
        net.add_segment(&m, [0.52, 0.52], [0.58, 0.52], 1.0).unwrap();
        net.add_segment(&m, [0.52, 0.57], [0.58, 0.57], 1.0).unwrap();
        let idx = enumerate_continua(&m, &c, &net);
        assert_eq!(idx.fracture_count(c.block(5, 5)), 2);
        // ordered by smallest node index
        let first = idx.get(idx.index(c.block(5, 5), 1));
        match &first.kind {
            ContinuumKind::Fracture { nodes, .. } => assert_eq!(m.node_ij(nodes[0]).1, 52),
            _ => unreachable!(),
        }
    }

    #[test]
    fn interface_fracture_belongs_to_both_blocks() {
        let m = unit(100);
        let c = CoarseGrid::new(&m, 10, 10).unwrap();
        let mut net = FractureNetwork::new();
        net.add_segment(&m, [0.52, 0.5], [0.58, 0.5], 1.0).unwrap();
        let idx = enumerate_continua(&m, &c, &net);
        assert_eq!(idx.fracture_count(c.block(5, 5)), 1);
        assert_eq!(idx.fracture_count(c.block(5, 4)), 1);
    }

    #[test]
    fn oversampling_counts() {
        let m = unit(100);
        let c = CoarseGrid::new(&m, 10, 10).unwrap();
        assert_eq!(oversample(&c, c.block(5, 5), Layers::Count(1)).blocks.len(), 9);
        assert_eq!(oversample(&c, c.block(0, 0), Layers::Count(1)).blocks.len(), 4);
        assert_eq!(oversample(&c, c.block(3, 7), Layers::Count(0)).blocks, vec![c.block(3, 7)]);
        let g = oversample(&c, 17, Layers::Global);
        assert_eq!(g.blocks.len(), 100);
        assert!(g.is_whole_domain());
        assert!(g.artificial_boundary_nodes(&m).is_empty());
    }

    #[test]
    fn artificial_boundary_excludes_domain_boundary() {
        let m = unit(100);
        let c = CoarseGrid::new(&m, 10, 10).unwrap();
        let r = oversample(&c, c.block(0, 5), Layers::Count(1));
        assert_eq!(r.touches_boundary, [true, false, false, false]);
        assert!(!r.is_artificial_boundary(0, 50));
        assert!(r.is_artificial_boundary(20, 50));
        assert!(r.is_artificial_boundary(10, 40));
        assert_eq!(r.boundary_nodes(&m).len() + r.interior_nodes(&m).len(), r.nodes.len());
    }

    #[test]
    fn degenerate_block_rejected() {
        let m = unit(4);
        let c = CoarseGrid::new(&m, 2, 2).unwrap();
        let mut net = FractureNetwork::new();
        net.add_segment(&m, [0.0, 0.0], [0.5, 0.0], 1.0).unwrap();
        assert!(check_blocks(&m, &c, &net).is_ok());
        // 2x2 fine mesh with 2x2 blocks: each block is one cell; cover all four corners of block 0
        let m = unit(4);
        let c = CoarseGrid::new(&m, 4, 4).unwrap();
        let mut net = FractureNetwork::new();
        net.add_segment(&m, [0.0, 0.0], [0.25, 0.0], 1.0).unwrap();
        net.add_segment(&m, [0.0, 0.25], [0.25, 0.25], 1.0).unwrap();
        assert!(matches!(check_blocks(&m, &c, &net), Err(NlmcError::DegenerateBlock(0))));
    }

    #[test]
    fn layers_parse_and_order() {
        assert_eq!("global".parse::<Layers>().unwrap(), Layers::Global);
        assert_eq!("3".parse::<Layers>().unwrap(), Layers::Count(3));
        assert!(Layers::Count(100) < Layers::Global);
        let v: Vec<Layers> = serde_json::from_str(r#"[1, 2, "global"]"#).unwrap();
        assert_eq!(v, vec![Layers::Count(1), Layers::Count(2), Layers::Global]);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[1,2,"global"]"#);
    }
}
