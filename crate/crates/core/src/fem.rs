//! P1 assembly: lumped and consistent mass, variable-coefficient stiffness,
//! the discrete Laplacian and the norms used by the energy estimates.

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseVector};
use crate::mesh::{ElementGeometry, Triangulation};

/// Diagonal of the row-summed mass matrix, `m_a = integral of phi_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedMass(pub DenseVector);

impl LumpedMass {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Discrete inner product `(u, v)_h = sum_a m_a u_a v_a`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.0.iter().zip(u.iter().zip(v)).map(|(m, (u, v))| m * u * v).sum()
    }
}

/// Mesh-dependent data reused by every time step.
#[derive(Debug, Clone)]
pub struct FemContext {
    geometry: Vec<ElementGeometry>,
    /// `area * grad_i . grad_j` per element.
    local_stiffness: Vec<[[f64; 3]; 3]>,
    /// CSR slot of local entry `(i, j)` per element.
    slots: Vec<[[usize; 3]; 3]>,
    pattern: CsrMatrix,
    pub lumped: LumpedMass,
    pub stiffness_unit: CsrMatrix,
    pub consistent_mass: CsrMatrix,
}

impl FemContext {
    pub fn new(mesh: &Triangulation) -> Result<Self> {
        let geometry = (0..mesh.num_triangles()).map(|t| mesh.element_geometry(t)).collect::<Result<Vec<_>>>()?;
        let pattern = node_pattern(mesh)?;
        let slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut s = [[0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        s[i][j] = pattern.slot(tri[i], tri[j]).expect("element entry in pattern");
                    }
                }
                s
            })
            .collect();
        let local_stiffness = geometry.iter().map(local_stiffness).collect();
        let mut ctx = FemContext {
            geometry,
            local_stiffness,
            slots,
            pattern,
            lumped: LumpedMass(Vec::new()),
            stiffness_unit: CsrMatrix::identity(0),
            consistent_mass: CsrMatrix::identity(0),
        };
        ctx.lumped = assemble_lumped_mass(mesh)?;
        ctx.stiffness_unit = ctx.stiffness(&vec![1.0; mesh.num_triangles()])?;
        ctx.consistent_mass = ctx.weighted_consistent_mass(&vec![1.0; mesh.num_triangles()])?;
        Ok(ctx)
    }

    pub fn num_nodes(&self) -> usize {
        self.pattern.dim()
    }

    pub fn num_elements(&self) -> usize {
        self.geometry.len()
    }

    pub fn geometry(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    /// Empty matrix on the node-adjacency pattern.
    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    /// `A_ab = sum_K coeff_K * integral_K grad phi_a . grad phi_b`, accumulated element by element.
    pub fn stiffness(&self, coeff: &[f64]) -> Result<CsrMatrix> {
        self.check_coeff(coeff)?;
        let mut a = self.pattern.zeros_like();
        let vals = a.values_mut();
        for ((c, local), slots) in coeff.iter().zip(&self.local_stiffness).zip(&self.slots) {
            for i in 0..3 {
                for j in 0..3 {
                    vals[slots[i][j]] += c * local[i][j];
                }
            }
        }
        Ok(a)
    }

    /// `sum_K w_K M_K` with `M_K = area/12 [[2,1,1],[1,2,1],[1,1,2]]`.
    pub fn weighted_consistent_mass(&self, weight: &[f64]) -> Result<CsrMatrix> {
        self.check_coeff(weight)?;
        let mut m = self.pattern.zeros_like();
        let vals = m.values_mut();
        for ((w, g), slots) in weight.iter().zip(&self.geometry).zip(&self.slots) {
            let off = w * g.area / 12.0;
            for i in 0..3 {
                for j in 0..3 {
                    vals[slots[i][j]] += if i == j { 2.0 * off } else { off };
                }
            }
        }
        Ok(m)
    }

    fn check_coeff(&self, coeff: &[f64]) -> Result<()> {
        if coeff.len() != self.geometry.len() {
            return Err(Error::DimensionMismatch { expected: self.geometry.len(), got: coeff.len() });
        }
        if let Some(t) = coeff.iter().position(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "element coefficient {t} must be finite and nonnegative, got {}",
                coeff[t]
            )));
        }
        Ok(())
    }

    /// `-Delta_h n = M_L^{-1} A n` with the unit-coefficient stiffness.
    pub fn discrete_laplacian(&self, n: &[f64]) -> Result<DenseVector> {
        discrete_laplacian_apply(&self.lumped, &self.stiffness_unit, n)
    }

    pub fn norms(&self, mesh: &Triangulation, field: &[f64]) -> Result<Norms> {
        norms(mesh, &self.lumped, field)
    }
}

fn local_stiffness(g: &ElementGeometry) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (gi, gj) = (g.grad_basis[i], g.grad_basis[j]);
            k[i][j] = g.area * (gi[0] * gj[0] + gi[1] * gj[1]);
        }
    }
    k
}

fn node_pattern(mesh: &Triangulation) -> Result<CsrMatrix> {
    let mut rows = vec![Vec::new(); mesh.num_nodes()];
    for tri in mesh.triangles() {
        for &a in tri {
            rows[a].extend_from_slice(tri);
        }
    }
    CsrMatrix::from_pattern(rows)
}

pub fn assemble_lumped_mass(mesh: &Triangulation) -> Result<LumpedMass> {
    let mut m = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.element_geometry(t)?.area;
        for &a in tri {
            m[a] += area / 3.0;
        }
    }
    Ok(LumpedMass(m))
}

pub fn assemble_stiffness(mesh: &Triangulation, coeff: &[f64]) -> Result<CsrMatrix> {
    FemContext::new(mesh)?.stiffness(coeff)
}

pub fn consistent_mass(mesh: &Triangulation) -> Result<CsrMatrix> {
    Ok(FemContext::new(mesh)?.consistent_mass)
}

pub fn discrete_laplacian_apply(lumped: &LumpedMass, stiffness_unit: &CsrMatrix, n: &[f64]) -> Result<DenseVector> {
    if lumped.0.len() != stiffness_unit.dim() {
        return Err(Error::DimensionMismatch { expected: stiffness_unit.dim(), got: lumped.0.len() });
    }
    let mut an = stiffness_unit.spmv(n)?;
    an.iter_mut().zip(&lumped.0).for_each(|(v, m)| *v /= m);
    Ok(an)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    /// `sqrt((u, u)_h)`.
    pub norm_h: f64,
    pub l2: f64,
    pub h1_seminorm: f64,
}

impl Norms {
    pub fn h1_squared(&self) -> f64 {
        self.l2 * self.l2 + self.h1_seminorm * self.h1_seminorm
    }
}

/// Discrete, L2 and H1-seminorm of a P1 field, integrated exactly.
pub fn norms(mesh: &Triangulation, lumped: &LumpedMass, field: &[f64]) -> Result<Norms> {
    if field.len() != mesh.num_nodes() || lumped.0.len() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch { expected: mesh.num_nodes(), got: field.len() });
    }
    let (mut l2, mut semi) = (0.0, 0.0);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = mesh.element_geometry(t)?;
        let u = tri.map(|a| field[a]);
        let sum = u[0] + u[1] + u[2];
        l2 += g.area / 12.0 * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + sum * sum);
        let mut grad = [0.0; 2];
        for i in 0..3 {
            grad[0] += u[i] * g.grad_basis[i][0];
            grad[1] += u[i] * g.grad_basis[i][1];
        }
        semi += g.area * (grad[0] * grad[0] + grad[1] * grad[1]);
    }
    Ok(Norms { norm_h: lumped.inner(field, field).sqrt(), l2: l2.sqrt(), h1_seminorm: semi.sqrt() })
}
