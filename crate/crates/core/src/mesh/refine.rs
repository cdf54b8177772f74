//! Uniform refinement by evaluating parent maps at child nodes.

use std::collections::HashMap;

use super::Mesh;

/// Identifies a point of the parent refinement lattice independently of
/// which parent element generated it.
///
/// Points on element corners, edges or faces are keyed by the sorted global
/// corner nodes of that entity plus canonical lattice coordinates; interior
/// points are keyed by the parent element.
#[derive(Hash, PartialEq, Eq)]
struct LatticeKey {
    entity: Vec<usize>,
    interior_of: Option<usize>,
    local: Vec<usize>,
}

/// Splits every element into `2^dim` children of the same degree.
///
/// Child node positions are images of the parent map, so the refined mesh
/// covers the same point set as the input.
pub fn uniform_refine(mesh: &Mesh) -> Mesh {
    let d = mesh.dim();
    let k = mesh.degree();
    let fine = 2 * k;
    let p1 = k + 1;
    let gll = mesh.basis().nodes_1d().to_vec();
    let corners = mesh.corner_local_indices();
    let lattice_coord = |m: usize| -> f64 {
        if m <= k {
            0.5 * gll[m]
        } else {
            0.5 + 0.5 * gll[m - k]
        }
    };

    let mut key_to_node: HashMap<LatticeKey, usize> = HashMap::new();
    let mut coords: Vec<f64> = Vec::new();
    let mut elements: Vec<usize> = Vec::new();
    let fine_side = fine + 1;
    let fine_total = fine_side.pow(d as u32);

    for e in 0..mesh.num_elements() {
        let conn = mesh.element(e);
        let mut local_to_global = vec![0usize; fine_total];
        for (lin, slot) in local_to_global.iter_mut().enumerate() {
            let mut m = [0usize; 3];
            let mut rem = lin;
            for a in 0..d {
                m[a] = rem % fine_side;
                rem /= fine_side;
            }
            let key = lattice_key(e, conn, &corners, d, fine, &m[..d]);
            let next = coords.len() / d;
            let id = *key_to_node.entry(key).or_insert_with(|| {
                let xi: Vec<f64> = m[..d].iter().map(|&v| lattice_coord(v)).collect();
                let x = mesh.map_point(e, &xi);
                coords.extend_from_slice(&x[..d]);
                next
            });
            *slot = id;
        }
        for child in 0..1usize << d {
            for i in 0..p1.pow(d as u32) {
                let mut rem = i;
                let mut lin = 0;
                let mut stride = 1;
                for a in 0..d {
                    let j = rem % p1;
                    rem /= p1;
                    let m = (child >> a & 1) * k + j;
                    lin += m * stride;
                    stride *= fine_side;
                }
                elements.push(local_to_global[lin]);
            }
        }
    }
    Mesh::new(d, k, coords, elements).expect("refinement of a valid mesh is valid")
}

fn lattice_key(e: usize, conn: &[usize], corners: &[usize], d: usize, fine: usize, m: &[usize]) -> LatticeKey {
    // Axes along which the point sits on an element side.
    let on_side: Vec<Option<usize>> = m
        .iter()
        .map(|&v| match v {
            0 => Some(0),
            v if v == fine => Some(1),
            _ => None,
        })
        .collect();
    let free: Vec<usize> = (0..d).filter(|&a| on_side[a].is_none()).collect();
    if free.len() == d {
        return LatticeKey {
            entity: Vec::new(),
            interior_of: Some(e),
            local: m.to_vec(),
        };
    }
    // Corner bitmask c has bit a set when the corner sits at the far side of axis a.
    let corner_id = |bits: usize| conn[corners[bits]];
    let base_bits: usize = (0..d).map(|a| on_side[a].unwrap_or(0) << a).sum();
    let entity_corners: Vec<usize> = (0..1usize << free.len())
        .map(|sub| {
            let mut bits = base_bits;
            for (t, &a) in free.iter().enumerate() {
                bits |= (sub >> t & 1) << a;
            }
            bits
        })
        .collect();
    let mut entity: Vec<usize> = entity_corners.iter().map(|&b| corner_id(b)).collect();

    let local = match free.len() {
        0 => Vec::new(),
        1 => {
            let a = free[0];
            let start = corner_id(base_bits);
            let end = corner_id(base_bits | 1 << a);
            vec![if start < end { m[a] } else { fine - m[a] }]
        }
        _ => {
            // Quadrilateral face in 3D: origin at the smallest corner id, first
            // axis toward its smaller-id neighbour.
            let (fa, fb) = (free[0], free[1]);
            let (origin_bits, _) = entity_corners
                .iter()
                .map(|&b| (b, corner_id(b)))
                .min_by_key(|&(_, id)| id)
                .unwrap();
            let oa = origin_bits >> fa & 1;
            let ob = origin_bits >> fb & 1;
            let ua = if oa == 0 { m[fa] } else { fine - m[fa] };
            let ub = if ob == 0 { m[fb] } else { fine - m[fb] };
            let na = corner_id(origin_bits ^ (1 << fa));
            let nb = corner_id(origin_bits ^ (1 << fb));
            if na < nb {
                vec![ua, ub]
            } else {
                vec![ub, ua]
            }
        }
    };
    entity.sort_unstable();
    LatticeKey {
        entity,
        interior_of: None,
        local,
    }
}
