use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Vector;

/// Gauss abscissa of the 2-point rule on [0, 1].
const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // 0.5 / sqrt(3)

/// One face of the axis-aligned reference box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    #[serde(rename = "x-")]
    XMin,
    #[serde(rename = "x+")]
    XMax,
    #[serde(rename = "y-")]
    YMin,
    #[serde(rename = "y+")]
    YMax,
    #[serde(rename = "z-")]
    ZMin,
    #[serde(rename = "z+")]
    ZMax,
}

impl Face {
    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    pub fn is_max(self) -> bool {
        matches!(self, Face::XMax | Face::YMax | Face::ZMax)
    }
}

/// Tags for the Dirichlet part Γ₀ and the traction part Γ_t of the boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub dirichlet: Vec<Face>,
    #[serde(default)]
    pub traction: Vec<Face>,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            dirichlet: vec![Face::XMin],
            traction: vec![Face::XMax],
        }
    }
}

/// Tensor-product 2-point Gauss rule on one element, with shape data.
///
/// Every element of a structured mesh is a translate of the same box, so a
/// single table serves the whole mesh.
#[derive(Clone, Debug)]
pub struct Quadrature {
    /// Reference coordinates in [0, 1]^d.
    pub points: Vec<Vector>,
    /// Physical weights; they sum to the element volume.
    pub weights: Vec<f64>,
    /// `shape[q][a]` = N_a at point q.
    pub shape: Vec<Vec<f64>>,
    /// `grads[q][a]` = physical gradient of N_a at point q.
    pub grads: Vec<Vec<Vector>>,
}

/// Structured multilinear mesh of the box Ω = Π [0, extent_k].
#[derive(Clone, Debug)]
pub struct ReferenceMesh {
    dim: usize,
    extents: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vector,
    nodes: Vec<Vector>,
    elements: Vec<usize>,
    quadrature: Quadrature,
    dirichlet: Vec<bool>,
    node_volume: Vec<f64>,
    traction_weight: Vec<f64>,
    boundary: BoundarySpec,
}

/// Multilinear shape functions on [0,1]^d; local node `a` sits at the corner
/// whose k-th coordinate is bit k of `a`.
pub fn shape_values(dim: usize, xi: &Vector) -> [f64; 8] {
    let mut out = [0.0; 8];
    for (a, v) in out.iter_mut().enumerate().take(1 << dim) {
        let mut prod = 1.0;
        for k in 0..dim {
            prod *= if (a >> k) & 1 == 1 { xi[k] } else { 1.0 - xi[k] };
        }
        *v = prod;
    }
    out
}

/// Gradients of the shape functions with respect to the reference coordinate ξ.
pub fn shape_gradients(dim: usize, xi: &Vector) -> [Vector; 8] {
    let mut out = [[0.0; 3]; 8];
    for (a, g) in out.iter_mut().enumerate().take(1 << dim) {
        for j in 0..dim {
            let mut prod = 1.0;
            for k in 0..dim {
                let bit = (a >> k) & 1 == 1;
                prod *= if k == j {
                    if bit {
                        1.0
                    } else {
                        -1.0
                    }
                } else if bit {
                    xi[k]
                } else {
                    1.0 - xi[k]
                };
            }
            g[j] = prod;
        }
    }
    out
}

impl ReferenceMesh {
    pub fn new(extents: &[f64], counts: &[usize], boundary: BoundarySpec) -> Result<Self> {
        let dim = extents.len();
        if dim != 2 && dim != 3 {
            return Err(invalid(format!("mesh dimension must be 2 or 3, got {dim}")));
        }
        if counts.len() != dim {
            return Err(invalid("mesh.counts must have one entry per axis"));
        }
        if extents.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(invalid("mesh.extents must be positive"));
        }
        if counts.iter().any(|c| *c == 0) {
            return Err(invalid("mesh.counts must be at least 1"));
        }
        if boundary.dirichlet.is_empty() {
            return Err(invalid("mesh.dirichlet must tag at least one face"));
        }
        for face in boundary.dirichlet.iter().chain(&boundary.traction) {
            if face.axis() >= dim {
                return Err(invalid(format!("face {face:?} does not exist in {dim}D")));
            }
        }
        if let Some(f) = boundary.dirichlet.iter().find(|f| boundary.traction.contains(f)) {
            return Err(invalid(format!("face {f:?} is tagged both Dirichlet and traction")));
        }

        let mut spacing = [0.0; 3];
        for k in 0..dim {
            spacing[k] = extents[k] / counts[k] as f64;
        }
        let node_counts: Vec<usize> = counts.iter().map(|c| c + 1).collect();
        let n_nodes: usize = node_counts.iter().product();
        let mut nodes = Vec::with_capacity(n_nodes);
        for idx in 0..n_nodes {
            let mut rem = idx;
            let mut x = [0.0; 3];
            for k in 0..dim {
                let i = rem % node_counts[k];
                rem /= node_counts[k];
                // Exact at the far face so face tagging is unambiguous.
                x[k] = if i == counts[k] {
                    extents[k]
                } else {
                    i as f64 * spacing[k]
                };
            }
            nodes.push(x);
        }

        let per_elem = 1 << dim;
        let n_elements: usize = counts.iter().product();
        let mut elements = Vec::with_capacity(n_elements * per_elem);
        for e in 0..n_elements {
            let mut rem = e;
            let mut base = [0usize; 3];
            for k in 0..dim {
                base[k] = rem % counts[k];
                rem /= counts[k];
            }
            for a in 0..per_elem {
                let mut idx = 0;
                let mut stride = 1;
                for k in 0..dim {
                    idx += (base[k] + ((a >> k) & 1)) * stride;
                    stride *= node_counts[k];
                }
                elements.push(idx);
            }
        }

        let element_volume: f64 = spacing[..dim].iter().product();
        let quadrature = build_quadrature(dim, &spacing, element_volume);

        let on_face = |x: &Vector, f: Face| {
            let k = f.axis();
            if f.is_max() {
                x[k] == extents[k]
            } else {
                x[k] == 0.0
            }
        };
        let dirichlet: Vec<bool> = nodes
            .iter()
            .map(|x| boundary.dirichlet.iter().any(|f| on_face(x, *f)))
            .collect();

        let mut node_volume = vec![0.0; n_nodes];
        for e in 0..n_elements {
            for a in 0..per_elem {
                node_volume[elements[e * per_elem + a]] += element_volume / per_elem as f64;
            }
        }

        // Facets of Γ_t: every element face lying on a traction face.
        let mut traction_weight = vec![0.0; n_nodes];
        for face in &boundary.traction {
            let k = face.axis();
            let facet_area: f64 = (0..dim).filter(|j| *j != k).map(|j| spacing[j]).product();
            let bit = usize::from(face.is_max());
            for e in 0..n_elements {
                let corner = elements[e * per_elem];
                let layer = if face.is_max() { counts[k] - 1 } else { 0 };
                let mut rem = corner;
                let mut coord = 0;
                for j in 0..=k {
                    coord = rem % node_counts[j];
                    rem /= node_counts[j];
                }
                if coord != layer {
                    continue;
                }
                for a in 0..per_elem {
                    if (a >> k) & 1 == bit {
                        traction_weight[elements[e * per_elem + a]] +=
                            facet_area / (per_elem / 2) as f64;
                    }
                }
            }
        }

        Ok(Self {
            dim,
            extents: extents.to_vec(),
            counts: counts.to_vec(),
            spacing,
            nodes,
            elements,
            quadrature,
            dirichlet,
            node_volume,
            traction_weight,
            boundary,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &Vector {
        &self.spacing
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.boundary
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn n_elements(&self) -> usize {
        self.elements.len() / self.nodes_per_element()
    }

    #[inline]
    pub fn nodes_per_element(&self) -> usize {
        1 << self.dim
    }

    pub fn node(&self, a: usize) -> &Vector {
        &self.nodes[a]
    }

    pub fn nodes(&self) -> &[Vector] {
        &self.nodes
    }

    #[inline]
    pub fn element_nodes(&self, e: usize) -> &[usize] {
        let n = self.nodes_per_element();
        &self.elements[e * n..(e + 1) * n]
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    pub fn element_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    /// |Ω|, the product of the extents.
    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    /// Diagonal length of the reference box.
    pub fn diameter(&self) -> f64 {
        self.extents.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn is_dirichlet(&self, a: usize) -> bool {
        self.dirichlet[a]
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    /// ∫_Ω N_a dx for every node.
    pub fn node_volume(&self) -> &[f64] {
        &self.node_volume
    }

    /// ∫_{Γ_t} N_a ds for every node.
    pub fn traction_weight(&self) -> &[f64] {
        &self.traction_weight
    }

    /// Lower corner of element `e` in the reference configuration.
    pub fn element_origin(&self, e: usize) -> Vector {
        self.nodes[self.element_nodes(e)[0]]
    }
}

fn build_quadrature(dim: usize, spacing: &Vector, element_volume: f64) -> Quadrature {
    let abscissae = [0.5 - GAUSS_OFFSET, 0.5 + GAUSS_OFFSET];
    let n_points = 1 << dim;
    let mut quadrature = Quadrature {
        points: Vec::with_capacity(n_points),
        weights: Vec::with_capacity(n_points),
        shape: Vec::with_capacity(n_points),
        grads: Vec::with_capacity(n_points),
    };
    for q in 0..n_points {
        let mut xi = [0.0; 3];
        for k in 0..dim {
            xi[k] = abscissae[(q >> k) & 1];
        }
        let values = shape_values(dim, &xi);
        let ref_grads = shape_gradients(dim, &xi);
        let grads = (0..n_points)
            .map(|a| {
                let mut g = [0.0; 3];
                for k in 0..dim {
                    g[k] = ref_grads[a][k] / spacing[k];
                }
                g
            })
            .collect();
        quadrature.points.push(xi);
        quadrature.weights.push(element_volume / n_points as f64);
        quadrature.shape.push(values[..n_points].to_vec());
        quadrature.grads.push(grads);
    }
    quadrature
}
