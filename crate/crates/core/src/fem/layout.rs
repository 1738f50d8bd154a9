//! Global numbering of cell and trace degrees of freedom.

use super::basis::dim_pk;
use crate::error::{HdgError, Result};
use crate::mesh::{FacetTag, Mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Equation {
    Poisson,
    Cdr,
    Stokes,
    Oseen,
}

impl Equation {
    pub fn is_flow(self) -> bool {
        matches!(self, Equation::Stokes | Equation::Oseen)
    }

    pub fn name(self) -> &'static str {
        match self {
            Equation::Poisson => "poisson",
            Equation::Cdr => "cdr",
            Equation::Stokes => "stokes",
            Equation::Oseen => "oseen",
        }
    }
}

impl std::str::FromStr for Equation {
    type Err = HdgError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(Equation::Poisson),
            "cdr" => Ok(Equation::Cdr),
            "stokes" => Ok(Equation::Stokes),
            "oseen" => Ok(Equation::Oseen),
            _ => Err(HdgError::Config(format!("unknown equation `{s}`"))),
        }
    }
}

/// Where a trace coefficient lives: in the unknown vector or among the eliminated Dirichlet values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dof {
    Free(usize),
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Free(usize),
    Fixed(usize),
}

/// Field-major numbering: `[sigma] [u] [p] [traces] [multiplier]`, cell-major inside each cell block.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceLayout {
    pub equation: Equation,
    pub degree: usize,
    pub n_cells: usize,
    /// Basis size per scalar cell component.
    pub m: usize,
    /// Basis size per scalar trace component.
    pub nt: usize,
    pub sigma_components: usize,
    pub u_components: usize,
    pub trace_components: usize,
    pub sigma_offset: usize,
    pub u_offset: usize,
    pub p_offset: usize,
    pub trace_offset: usize,
    pub constraint: Option<usize>,
    pub n_free_facets: usize,
    pub n_fixed_facets: usize,
    pub n_dofs: usize,
    slots: Vec<Slot>,
}

pub fn build_layout(mesh: &Mesh, k: usize, equation: Equation) -> Result<SpaceLayout> {
    if k > super::basis::MAX_ORDER {
        return Err(HdgError::Config(format!("degree {k} is outside the supported range 0..=4")));
    }
    let n_dirichlet = mesh.count_tag(FacetTag::Dirichlet);
    if n_dirichlet == 0 {
        return Err(HdgError::Config("the Dirichlet boundary is empty".into()));
    }
    if equation != Equation::Poisson && mesh.count_tag(FacetTag::Neumann) > 0 {
        return Err(HdgError::Config(format!(
            "{} problems take Dirichlet data on the whole boundary",
            equation.name()
        )));
    }
    let m = dim_pk(k);
    let nt = k + 1;
    let (sigma_components, u_components, trace_components) =
        if equation.is_flow() { (4, 2, 2) } else { (0, 2, 1) };
    let n_cells = mesh.num_cells();
    let mut slots = Vec::with_capacity(mesh.num_facets());
    let (mut free, mut fixed) = (0, 0);
    for tag in &mesh.facet_tags {
        if *tag == FacetTag::Dirichlet {
            slots.push(Slot::Fixed(fixed));
            fixed += 1;
        } else {
            slots.push(Slot::Free(free));
            free += 1;
        }
    }
    let sigma_offset = 0;
    let u_offset = sigma_offset + n_cells * sigma_components * m;
    let p_offset = u_offset + n_cells * u_components * m;
    let trace_offset = p_offset + n_cells * m;
    let end = trace_offset + free * trace_components * nt;
    let (constraint, n_dofs) = if equation.is_flow() { (Some(end), end + 1) } else { (None, end) };
    Ok(SpaceLayout {
        equation,
        degree: k,
        n_cells,
        m,
        nt,
        sigma_components,
        u_components,
        trace_components,
        sigma_offset,
        u_offset,
        p_offset,
        trace_offset,
        constraint,
        n_free_facets: free,
        n_fixed_facets: fixed,
        n_dofs,
        slots,
    })
}

impl SpaceLayout {
    pub fn sigma_dof(&self, c: usize, comp: usize, i: usize) -> usize {
        self.sigma_offset + (c * self.sigma_components + comp) * self.m + i
    }

    pub fn u_dof(&self, c: usize, comp: usize, i: usize) -> usize {
        self.u_offset + (c * self.u_components + comp) * self.m + i
    }

    pub fn p_dof(&self, c: usize, i: usize) -> usize {
        self.p_offset + c * self.m + i
    }

    pub fn trace_block(&self) -> usize {
        self.trace_components * self.nt
    }

    pub fn trace_dof(&self, f: usize, comp: usize, j: usize) -> Dof {
        let local = comp * self.nt + j;
        match self.slots[f] {
            Slot::Free(s) => Dof::Free(self.trace_offset + s * self.trace_block() + local),
            Slot::Fixed(s) => Dof::Fixed(s * self.trace_block() + local),
        }
    }

    pub fn is_fixed_facet(&self, f: usize) -> bool {
        matches!(self.slots[f], Slot::Fixed(_))
    }

    pub fn n_fixed(&self) -> usize {
        self.n_fixed_facets * self.trace_block()
    }

    /// Number of scalar cell unknowns per cell in layout order (sigma, u, p).
    pub fn cell_block(&self) -> usize {
        (self.sigma_components + self.u_components + 1) * self.m
    }

    /// Global indices of the cell unknowns of `c` in local order: sigma comps, u comps, p.
    pub fn cell_dofs(&self, c: usize) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.cell_block());
        for comp in 0..self.sigma_components {
            v.extend((0..self.m).map(|i| self.sigma_dof(c, comp, i)));
        }
        for comp in 0..self.u_components {
            v.extend((0..self.m).map(|i| self.u_dof(c, comp, i)));
        }
        v.extend((0..self.m).map(|i| self.p_dof(c, i)));
        v
    }

    /// Local-to-global map for an element: cell unknowns followed by the traces of local facets 0, 1, 2.
    pub fn element_dofs(&self, mesh: &Mesh, c: usize) -> Vec<Dof> {
        let mut v: Vec<Dof> = self.cell_dofs(c).into_iter().map(Dof::Free).collect();
        for cf in &mesh.cell_facets[c] {
            for comp in 0..self.trace_components {
                v.extend((0..self.nt).map(|j| self.trace_dof(cf.facet, comp, j)));
            }
        }
        v
    }

    pub fn dim_sigma(&self) -> usize {
        self.n_cells * self.sigma_components * self.m
    }

    pub fn dim_v(&self) -> usize {
        self.n_cells * self.u_components * self.m
    }

    pub fn dim_q(&self) -> usize {
        self.n_cells * self.m
    }

    pub fn dim_m(&self) -> usize {
        self.n_free_facets * self.trace_block()
    }

    /// Unknowns excluding the pressure multiplier.
    pub fn n_field_dofs(&self) -> usize {
        self.trace_offset + self.dim_m()
    }
}
