//! Marching cubes surface extraction.
//!
//! The 256-entry triangle table is generated once at first use instead of
//! being transcribed: for each sign configuration the boundary of the
//! isosurface patch is walked across the cube faces (each maximal run of
//! inside corners along a face cycle yields one directed segment from its
//! entry edge to its exit edge), the resulting closed loops are fan
//! triangulated. Segment pairing depends only on the signs of the face's
//! own corners, so adjacent cells always agree on shared faces and the
//! output is crack-free. Ambiguous faces are resolved by isolating the
//! inside corners; there is no data-dependent decider.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::volume::{SdfGrid, TriMesh};

/// Cube corners indexed c = dx + 2*dy + 4*dz.
const CORNER_OFFSET: [[u32; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Cube edges as (low, high) corner pairs: 0..3 along x, 4..7 along y,
/// 8..11 along z.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Faces as corner cycles, counterclockwise when viewed from outside.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2], // x = 0
    [1, 3, 7, 5], // x = 1
    [0, 1, 5, 4], // y = 0
    [2, 6, 7, 3], // y = 1
    [0, 2, 3, 1], // z = 0
    [4, 5, 7, 6], // z = 1
];

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
        .expect("corners are adjacent")
}

/// Directed boundary successors for a configuration (bit c set = corner c
/// inside). Walking entry edge -> exit edge around every face links the cut
/// edges into disjoint loops oriented so fans point toward positive values.
fn successors(config: u8) -> [Option<usize>; 12] {
    let inside = |c: usize| config >> c & 1 == 1;
    let mut succ = [None; 12];
    for face in &FACES {
        for start in 0..4 {
            let prev = face[(start + 3) % 4];
            let cur = face[start];
            if !inside(cur) || inside(prev) {
                continue;
            }
            // `cur` begins a maximal run of inside corners.
            let entry = edge_between(prev, cur);
            let mut end = start;
            while inside(face[(end + 1) % 4]) {
                end += 1;
            }
            let exit = edge_between(face[end % 4], face[(end + 1) % 4]);
            succ[entry] = Some(exit);
        }
    }
    succ
}

fn triangulate(config: u8) -> Vec<[u8; 3]> {
    let succ = successors(config);
    let mut used = [false; 12];
    let mut tris = Vec::new();
    for start in 0..12 {
        if used[start] || succ[start].is_none() {
            continue;
        }
        let mut ring = vec![start];
        used[start] = true;
        let mut cur = succ[start].unwrap();
        while cur != start {
            ring.push(cur);
            used[cur] = true;
            cur = succ[cur].unwrap();
        }
        for i in 1..ring.len() - 1 {
            tris.push([ring[0] as u8, ring[i] as u8, ring[i + 1] as u8]);
        }
    }
    tris
}

fn triangle_table() -> &'static Vec<Vec<[u8; 3]>> {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=255u8).map(triangulate).collect())
}

/// Extracts the `iso` level set as a triangle mesh with shared vertices and
/// outward orientation (normals point toward positive values). Returns an
/// empty mesh when the grid never crosses the level.
pub fn marching_cubes(grid: &SdfGrid, iso: f64) -> Result<TriMesh> {
    let r = grid.placement.resolution;
    if r < 2 {
        return Err(Error::InvalidPlacement(
            "marching cubes needs a grid resolution of at least 2".into(),
        ));
    }
    let table = triangle_table();
    let placement = &grid.placement;

    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // Grid edge -> vertex id; key is (low corner, axis).
    let mut edge_vertex: HashMap<(u32, u32, u32, u8), u32> = HashMap::new();

    for i in 0..r - 1 {
        for j in 0..r - 1 {
            for k in 0..r - 1 {
                let mut vals = [0.0f64; 8];
                let mut config = 0u8;
                for (c, off) in CORNER_OFFSET.iter().enumerate() {
                    let v = grid.value(i + off[0], j + off[1], k + off[2]);
                    vals[c] = v;
                    if v < iso {
                        config |= 1 << c;
                    }
                }
                if config == 0 || config == 255 {
                    continue;
                }

                let mut vertex_on_edge = |e: usize| -> u32 {
                    let (ca, cb) = EDGES[e];
                    let oa = CORNER_OFFSET[ca];
                    let axis = (e / 4) as u8;
                    let key = (i + oa[0], j + oa[1], k + oa[2], axis);
                    if let Some(&id) = edge_vertex.get(&key) {
                        return id;
                    }
                    let ob = CORNER_OFFSET[cb];
                    let pa = placement.voxel_center_unchecked(i + oa[0], j + oa[1], k + oa[2]);
                    let pb = placement.voxel_center_unchecked(i + ob[0], j + ob[1], k + ob[2]);
                    let (va, vb) = (vals[ca], vals[cb]);
                    let mut t = (iso - va) / (vb - va);
                    if !t.is_finite() {
                        t = 0.5;
                    }
                    t = t.clamp(0.0, 1.0);
                    let id = vertices.len() as u32;
                    vertices.push(pa + (pb - pa) * t);
                    edge_vertex.insert(key, id);
                    id
                };

                for tri in &table[config as usize] {
                    let ids = [
                        vertex_on_edge(tri[0] as usize),
                        vertex_on_edge(tri[1] as usize),
                        vertex_on_edge(tri[2] as usize),
                    ];
                    if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] {
                        triangles.push(ids);
                    }
                }
            }
        }
    }

    Ok(TriMesh { vertices, triangles })
}
