//! P1 finite element assembly on triangle meshes: mass, Laplacian, and
//! element-weighted linear elasticity; Dirichlet elimination with an affine
//! lift; boundary reaction forces.
//!
//! Displacement DOFs are interleaved: DOF `2i + c` is component `c` of node `i`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::{CsrMatrix, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneMode {
    Strain,
    Stress,
}

/// Isotropic linear elasticity. `e` is stored in MPa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticLaw {
    pub e: f64,
    pub nu: f64,
    pub mode: PlaneMode,
}

impl ElasticLaw {
    pub fn new(e_mpa: f64, nu: f64, mode: PlaneMode) -> Result<Self> {
        if !(e_mpa > 0.0 && e_mpa.is_finite()) {
            return Err(Error::InvalidInput(format!("Young's modulus must be positive, got {e_mpa}")));
        }
        if !(nu > 0.0 && nu < 0.5) {
            return Err(Error::InvalidInput(format!("Poisson ratio must lie in (0, 0.5), got {nu}")));
        }
        Ok(Self { e: e_mpa, nu, mode })
    }

    pub fn from_gpa(e_gpa: f64, nu: f64, mode: PlaneMode) -> Result<Self> {
        Self::new(e_gpa * 1000.0, nu, mode)
    }

    /// Lamé parameters `(λ, μ)`.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.e, self.nu);
        (e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
    }

    /// Voigt matrix acting on `(ε_xx, ε_yy, γ_xy)`.
    pub fn d_matrix(&self) -> [[f64; 3]; 3] {
        match self.mode {
            PlaneMode::Strain => {
                let (l, m) = self.lame();
                [[l + 2.0 * m, l, 0.0], [l, l + 2.0 * m, 0.0], [0.0, 0.0, m]]
            }
            PlaneMode::Stress => {
                let c = self.e / (1.0 - self.nu * self.nu);
                [[c, c * self.nu, 0.0], [c * self.nu, c, 0.0], [0.0, 0.0, c * (1.0 - self.nu) / 2.0]]
            }
        }
    }
}

/// Geometric data of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub nodes: [usize; 3],
    pub area: f64,
    /// Gradients of the three barycentric basis functions.
    pub grads: [[f64; 2]; 3],
}

impl Element {
    pub fn dofs(&self) -> [usize; 6] {
        let [a, b, c] = self.nodes;
        [2 * a, 2 * a + 1, 2 * b, 2 * b + 1, 2 * c, 2 * c + 1]
    }

    /// Strain `(ε_xx, ε_yy, γ_xy)` of local displacements.
    pub fn strain(&self, ue: &[f64; 6]) -> [f64; 3] {
        let g = &self.grads;
        let mut e = [0.0; 3];
        for a in 0..3 {
            let (ux, uy) = (ue[2 * a], ue[2 * a + 1]);
            e[0] += g[a][0] * ux;
            e[1] += g[a][1] * uy;
            e[2] += g[a][1] * ux + g[a][0] * uy;
        }
        e
    }

    /// `Bᵀ s` for a Voigt stress `s`.
    pub fn strain_transpose(&self, s: &[f64; 3]) -> [f64; 6] {
        let g = &self.grads;
        let mut out = [0.0; 6];
        for a in 0..3 {
            out[2 * a] = g[a][0] * s[0] + g[a][1] * s[2];
            out[2 * a + 1] = g[a][1] * s[1] + g[a][0] * s[2];
        }
        out
    }
}

pub fn elements(mesh: &Mesh) -> Result<Vec<Element>> {
    let p = mesh.nodes();
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(k, &nodes)| {
            let [a, b, c] = nodes.map(|i| p[i]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            if !(det > 0.0) {
                return Err(Error::Mesh(format!("degenerate triangle {k}")));
            }
            let q = [a, b, c];
            let mut grads = [[0.0; 2]; 3];
            for i in 0..3 {
                let (j, l) = ((i + 1) % 3, (i + 2) % 3);
                grads[i] = [(q[j][1] - q[l][1]) / det, (q[l][0] - q[j][0]) / det];
            }
            Ok(Element {
                nodes,
                area: 0.5 * det,
                grads,
            })
        })
        .collect()
}

pub fn assemble_mass(mesh: &Mesh) -> Result<CsrMatrix> {
    let els = elements(mesh)?;
    let n = mesh.num_nodes();
    let mut tb = TripletBuilder::with_capacity(n, n, 9 * els.len());
    for el in &els {
        for a in 0..3 {
            for b in 0..3 {
                let w = if a == b { 2.0 } else { 1.0 };
                tb.push(el.nodes[a], el.nodes[b], el.area / 12.0 * w);
            }
        }
    }
    Ok(tb.build())
}

pub fn assemble_laplace(mesh: &Mesh) -> Result<CsrMatrix> {
    let els = elements(mesh)?;
    let n = mesh.num_nodes();
    let mut tb = TripletBuilder::with_capacity(n, n, 9 * els.len());
    for el in &els {
        let g = &el.grads;
        for a in 0..3 {
            for b in 0..3 {
                tb.push(el.nodes[a], el.nodes[b], el.area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]));
            }
        }
    }
    Ok(tb.build())
}

/// Precomputed undamaged element stiffness matrices `area · BᵀDB`.
#[derive(Debug, Clone)]
pub struct Elasticity {
    pub law: ElasticLaw,
    pub elements: Vec<Element>,
    pub local: Vec<[[f64; 6]; 6]>,
    ndof: usize,
}

impl Elasticity {
    pub fn new(mesh: &Mesh, law: ElasticLaw) -> Result<Self> {
        let elements = elements(mesh)?;
        let d = law.d_matrix();
        let local = elements
            .iter()
            .map(|el| {
                let mut k = [[0.0; 6]; 6];
                for j in 0..6 {
                    let mut e = [0.0; 6];
                    e[j] = 1.0;
                    let s = voigt_mul(&d, &el.strain(&e));
                    let col = el.strain_transpose(&s);
                    for i in 0..6 {
                        k[i][j] = el.area * col[i];
                    }
                }
                // exact symmetry
                for i in 0..6 {
                    for j in 0..i {
                        let m = 0.5 * (k[i][j] + k[j][i]);
                        k[i][j] = m;
                        k[j][i] = m;
                    }
                }
                k
            })
            .collect();
        Ok(Self {
            law,
            elements,
            local,
            ndof: 2 * mesh.num_nodes(),
        })
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    /// `Σ_T w_T K_T` assembled globally.
    pub fn assemble(&self, weights: &[f64]) -> Result<CsrMatrix> {
        check_dim("elasticity weights", self.elements.len(), weights.len())?;
        let mut tb = TripletBuilder::with_capacity(self.ndof, self.ndof, 36 * self.elements.len());
        for ((el, k), &w) in self.elements.iter().zip(&self.local).zip(weights) {
            let dofs = el.dofs();
            for i in 0..6 {
                for j in 0..6 {
                    tb.push(dofs[i], dofs[j], w * k[i][j]);
                }
            }
        }
        Ok(tb.build())
    }

    pub fn gather(&self, k: usize, u: &[f64]) -> [f64; 6] {
        self.elements[k].dofs().map(|d| u[d])
    }

    /// Undamaged element energy `½ uᵀ K_T u`.
    pub fn element_energy(&self, k: usize, u: &[f64]) -> f64 {
        let ue = self.gather(k, u);
        let ku = local_mul(&self.local[k], &ue);
        0.5 * ue.iter().zip(&ku).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Voigt stress with unit softening.
    pub fn element_stress(&self, k: usize, u: &[f64]) -> [f64; 3] {
        voigt_mul(&self.law.d_matrix(), &self.elements[k].strain(&self.gather(k, u)))
    }
}

pub(crate) fn voigt_mul(d: &[[f64; 3]; 3], e: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| d[i][0] * e[0] + d[i][1] * e[1] + d[i][2] * e[2])
}

pub(crate) fn local_mul(k: &[[f64; 6]; 6], u: &[f64; 6]) -> [f64; 6] {
    [0, 1, 2, 3, 4, 5].map(|i| (0..6).map(|j| k[i][j] * u[j]).sum())
}

/// Per-element centroid values of a P1 field.
pub fn centroid_values(mesh: &Mesh, z: &[f64]) -> Vec<f64> {
    mesh.triangles().iter().map(|t| (z[t[0]] + z[t[1]] + z[t[2]]) / 3.0).collect()
}

/// Stiffness with the softening factor `g` evaluated at element centroids.
pub fn assemble_elasticity(mesh: &Mesh, z: &[f64], g: impl Fn(f64) -> f64, law: ElasticLaw) -> Result<CsrMatrix> {
    check_dim("assemble_elasticity", mesh.num_nodes(), z.len())?;
    let el = Elasticity::new(mesh, law)?;
    let w: Vec<f64> = centroid_values(mesh, z).into_iter().map(g).collect();
    el.assemble(&w)
}

/// `u_c = rate · t` on all nodes of edges tagged `tag`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletCondition {
    pub tag: BoundaryTag,
    pub component: usize,
    pub rate: f64,
}

/// Dirichlet data resolved to DOFs. A DOF touched by several conditions keeps
/// the first one in list order; distinct components on one node combine.
#[derive(Debug, Clone)]
pub struct Dirichlet {
    rates: Vec<f64>,
    fixed: Vec<bool>,
    free: Vec<usize>,
    constrained: Vec<usize>,
    free_index: Vec<usize>,
    conditions: Vec<DirichletCondition>,
}

impl Dirichlet {
    pub fn new(mesh: &Mesh, conditions: &[DirichletCondition]) -> Result<Self> {
        let ndof = 2 * mesh.num_nodes();
        let mut rates = vec![0.0; ndof];
        let mut fixed = vec![false; ndof];
        for c in conditions {
            if c.component > 1 {
                return Err(Error::InvalidInput(format!("displacement component {} out of range", c.component)));
            }
            if !mesh.has_tag(c.tag) {
                return Err(Error::Mesh(format!("no boundary edges tagged {}", c.tag.as_str())));
            }
            for node in mesh.tagged_nodes(c.tag) {
                let d = 2 * node + c.component;
                if !fixed[d] {
                    fixed[d] = true;
                    rates[d] = c.rate;
                }
            }
        }
        let free: Vec<usize> = (0..ndof).filter(|&d| !fixed[d]).collect();
        let constrained: Vec<usize> = (0..ndof).filter(|&d| fixed[d]).collect();
        let mut free_index = vec![usize::MAX; ndof];
        for (i, &d) in free.iter().enumerate() {
            free_index[d] = i;
        }
        Ok(Self {
            rates,
            fixed,
            free,
            constrained,
            free_index,
            conditions: conditions.to_vec(),
        })
    }

    pub fn ndof(&self) -> usize {
        self.rates.len()
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn constrained(&self) -> &[usize] {
        &self.constrained
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed[dof]
    }

    /// Position of `dof` among the free DOFs.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        let i = self.free_index[dof];
        (i != usize::MAX).then_some(i)
    }

    pub fn conditions(&self) -> &[DirichletCondition] {
        &self.conditions
    }

    /// `du_D/dt` as a full nodal field.
    pub fn lift_rate(&self) -> &[f64] {
        &self.rates
    }

    /// `u_D(t)`, supported on constrained DOFs.
    pub fn lift(&self, t: f64) -> Vec<f64> {
        self.rates.iter().map(|r| r * t).collect()
    }

    /// Scatters free values into a full field with zeros on constrained DOFs.
    pub fn expand(&self, u_free: &[f64]) -> Result<Vec<f64>> {
        check_dim("Dirichlet expand", self.free.len(), u_free.len())?;
        let mut u = vec![0.0; self.ndof()];
        for (&d, &v) in self.free.iter().zip(u_free) {
            u[d] = v;
        }
        Ok(u)
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }
}

/// Eliminated system `K_ff u = −K_fc u_D(t)` and its lift.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub lift: Vec<f64>,
}

pub fn apply_dirichlet(k: &CsrMatrix, bc: &Dirichlet, t: f64) -> Result<ReducedSystem> {
    check_dim("apply_dirichlet", bc.ndof(), k.nrows())?;
    let lift = bc.lift(t);
    let kf = k.submatrix(bc.free(), &(0..bc.ndof()).collect::<Vec<_>>());
    let rhs = kf.mul_vec(&lift).into_iter().map(|v| -v).collect();
    Ok(ReducedSystem {
        matrix: k.submatrix(bc.free(), bc.free()),
        rhs,
        lift,
    })
}

/// Consistent nodal reaction: sum of `(K w)_d` over DOFs of component
/// `component` on nodes tagged `tag`, with `w = u + u_D` the total field.
pub fn reaction_force_residual(mesh: &Mesh, k: &CsrMatrix, w: &[f64], tag: BoundaryTag, component: usize) -> Result<f64> {
    check_dim("reaction_force", k.ncols(), w.len())?;
    if !mesh.has_tag(tag) {
        return Err(Error::Mesh(format!("no boundary edges tagged {}", tag.as_str())));
    }
    let r = k.mul_vec(w);
    Ok(mesh.tagged_nodes(tag).into_iter().map(|n| r[2 * n + component]).sum())
}

/// Traction integral `Σ_e |e| (g_T σ_T n)·e_c` over edges tagged `tag`, using
/// the element-constant stress of the adjacent triangle.
pub fn reaction_force_flux(
    mesh: &Mesh,
    elasticity: &Elasticity,
    w: &[f64],
    weights: &[f64],
    tag: BoundaryTag,
    component: usize,
) -> Result<f64> {
    check_dim("reaction_force_flux", elasticity.ndof(), w.len())?;
    check_dim("reaction_force_flux weights", mesh.num_triangles(), weights.len())?;
    let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (k, t) in mesh.triangles().iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            owner.insert((a.min(b), a.max(b)), k);
        }
    }
    let p = mesh.nodes();
    let mut total = 0.0;
    let mut any = false;
    for edge in mesh.boundary().iter().filter(|e| e.tag == tag) {
        any = true;
        let [a, b] = edge.nodes;
        let k = owner[&(a.min(b), a.max(b))];
        let third = mesh.triangles()[k].into_iter().find(|&v| v != a && v != b).expect("triangle has a third vertex");
        let t = [p[b][0] - p[a][0], p[b][1] - p[a][1]];
        let mut n = [t[1], -t[0]];
        let to_third = [p[third][0] - p[a][0], p[third][1] - p[a][1]];
        if n[0] * to_third[0] + n[1] * to_third[1] > 0.0 {
            n = [-n[0], -n[1]];
        }
        // |n| equals the edge length, so no separate length factor
        let s = elasticity.element_stress(k, w);
        let traction = [s[0] * n[0] + s[2] * n[1], s[2] * n[0] + s[1] * n[1]];
        total += weights[k] * traction[component];
    }
    if !any {
        return Err(Error::Mesh(format!("no boundary edges tagged {}", tag.as_str())));
    }
    Ok(total)
}
