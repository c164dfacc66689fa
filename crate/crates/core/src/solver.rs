//! Nodal analysis of the selector-free crossbar during a row read.
//!
//! Network: every cell is a linear conductance between its row and column.
//! Columns are driven by voltage sources, optionally through a lumped driver
//! resistance. The sensed row is pinned to 0 V by the TIA. Non-sensed rows
//! either float or are grounded. With a nonzero line resistance every
//! junction becomes its own node.
//!
//! The system matrix depends only on conductances and topology, so a
//! [`PreparedRead`] factors it once and reuses the LU for every column drive
//! pattern (PWM cycles, samples).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::crossbar::{CrossbarState, RowPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReadBoundaryConditions {
    pub driven_column_voltages: Vec<f64>,
    pub sensed_row: usize,
    pub nonsensed_row_policy: RowPolicy,
}

/// Junction voltages of the distributed-line model, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshVoltages {
    pub row_junctions: Vec<f64>,
    pub column_junctions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalSolution {
    /// Lumped model: row line voltages. Mesh model: voltage at each row's
    /// terminal junction (column 0).
    pub row_node_voltages: Vec<f64>,
    /// Lumped model: column line voltages. Mesh model: voltage at each
    /// column's driver-side junction (row 0).
    pub column_node_voltages: Vec<f64>,
    pub sensed_row_current: f64,
    /// Max |net current| over unknown nodes, A.
    pub kcl_residual: f64,
    /// Largest branch current magnitude, A.
    pub max_branch_current: f64,
    pub mesh: Option<MeshVoltages>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Ground,
    /// Ideal source at the column's driven voltage.
    Source(usize),
    Row(usize),
    Col(usize),
    RowJ(usize, usize),
    ColJ(usize, usize),
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    a: Node,
    b: Node,
    g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Topology {
    Lumped,
    Mesh,
}

/// Branch list of the read network plus the branches feeding the TIA.
#[derive(Debug, Clone)]
struct Network {
    rows: usize,
    cols: usize,
    topology: Topology,
    branches: Vec<Branch>,
    sense: Vec<(Node, f64)>,
    unknowns: Vec<Node>,
    index: HashMap<Node, usize>,
}

impl Network {
    fn build(xbar: &CrossbarState, sensed: usize, policy: RowPolicy, topology: Topology) -> Self {
        let (rows, cols) = (xbar.rows(), xbar.cols());
        let rd = xbar.params.driver_resistance;
        let mut branches = Vec::new();
        let mut unknowns = Vec::new();
        let mut sense = Vec::new();
        let row_fixed = |r: usize| r == sensed || policy == RowPolicy::Grounded;

        match topology {
            Topology::Lumped => {
                let row_node = |r| {
                    if row_fixed(r) {
                        Node::Ground
                    } else {
                        Node::Row(r)
                    }
                };
                let col_node = |c| {
                    if rd > 0.0 {
                        Node::Col(c)
                    } else {
                        Node::Source(c)
                    }
                };
                unknowns.extend((0..rows).filter(|&r| !row_fixed(r)).map(Node::Row));
                if rd > 0.0 {
                    unknowns.extend((0..cols).map(Node::Col));
                    branches.extend((0..cols).map(|c| Branch {
                        a: Node::Source(c),
                        b: Node::Col(c),
                        g: 1.0 / rd,
                    }));
                }
                for r in 0..rows {
                    for c in 0..cols {
                        let g = xbar.conductance(r, c);
                        branches.push(Branch {
                            a: col_node(c),
                            b: row_node(r),
                            g,
                        });
                        if r == sensed {
                            sense.push((col_node(c), g));
                        }
                    }
                }
            }
            Topology::Mesh => {
                let gl = 1.0 / xbar.params.line_resistance;
                for r in 0..rows {
                    for c in 0..cols {
                        unknowns.push(Node::RowJ(r, c));
                        unknowns.push(Node::ColJ(r, c));
                        branches.push(Branch {
                            a: Node::ColJ(r, c),
                            b: Node::RowJ(r, c),
                            g: xbar.conductance(r, c),
                        });
                        if c + 1 < cols {
                            branches.push(Branch {
                                a: Node::RowJ(r, c),
                                b: Node::RowJ(r, c + 1),
                                g: gl,
                            });
                        }
                        if r + 1 < rows {
                            branches.push(Branch {
                                a: Node::ColJ(r, c),
                                b: Node::ColJ(r + 1, c),
                                g: gl,
                            });
                        }
                    }
                    // Row terminal sits at the column-0 end.
                    if row_fixed(r) {
                        branches.push(Branch {
                            a: Node::RowJ(r, 0),
                            b: Node::Ground,
                            g: gl,
                        });
                    }
                }
                let g_drive = 1.0 / (rd + xbar.params.line_resistance);
                for c in 0..cols {
                    branches.push(Branch {
                        a: Node::Source(c),
                        b: Node::ColJ(0, c),
                        g: g_drive,
                    });
                }
                sense.push((Node::RowJ(sensed, 0), gl));
            }
        }
        let index = unknowns.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        Self {
            rows,
            cols,
            topology,
            branches,
            sense,
            unknowns,
            index,
        }
    }

    fn index_of(&self, node: Node) -> Option<usize> {
        self.index.get(&node).copied()
    }

    fn voltage(&self, node: Node, sol: &NodalSolution, drive: &[f64]) -> f64 {
        match node {
            Node::Ground => 0.0,
            Node::Source(c) => drive[c],
            Node::Row(r) => sol.row_node_voltages[r],
            Node::Col(c) => sol.column_node_voltages[c],
            Node::RowJ(r, c) => sol
                .mesh
                .as_ref()
                .map_or(f64::NAN, |m| m.row_junctions[r * self.cols + c]),
            Node::ColJ(r, c) => sol
                .mesh
                .as_ref()
                .map_or(f64::NAN, |m| m.column_junctions[r * self.cols + c]),
        }
    }

    /// Max |net current| at unknown nodes and max |branch current|.
    fn residual(&self, sol: &NodalSolution, drive: &[f64]) -> (f64, f64) {
        let mut net = vec![0.0; self.unknowns.len()];
        let mut max_branch = 0.0f64;
        let idx: Vec<(Option<usize>, Option<usize>)> = self
            .branches
            .iter()
            .map(|b| (self.index_of(b.a), self.index_of(b.b)))
            .collect();
        for (br, (ia, ib)) in self.branches.iter().zip(idx) {
            let i = br.g * (self.voltage(br.a, sol, drive) - self.voltage(br.b, sol, drive));
            max_branch = max_branch.max(i.abs());
            if let Some(ia) = ia {
                net[ia] -= i;
            }
            if let Some(ib) = ib {
                net[ib] += i;
            }
        }
        let residual = net.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (residual, max_branch)
    }
}

/// Factored read network for one (crossbar, sensed row, policy).
#[derive(Debug, Clone)]
pub struct PreparedRead {
    net: Network,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    /// `b = source_map · V_columns`.
    source_map: DMatrix<f64>,
    /// Unknown index of each branch endpoint, precomputed.
    sense_idx: Vec<(Option<usize>, Option<usize>, f64)>,
}

impl PreparedRead {
    pub fn new(xbar: &CrossbarState, sensed_row: usize, policy: RowPolicy) -> Result<Self> {
        let topology = if xbar.params.line_resistance > 0.0 {
            Topology::Mesh
        } else {
            Topology::Lumped
        };
        Self::with_topology(xbar, sensed_row, policy, topology)
    }

    fn with_topology(
        xbar: &CrossbarState,
        sensed_row: usize,
        policy: RowPolicy,
        topology: Topology,
    ) -> Result<Self> {
        xbar.check_row(sensed_row)?;
        let net = Network::build(xbar, sensed_row, policy, topology);
        let n = net.unknowns.len();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut source_map = DMatrix::<f64>::zeros(n, net.cols);
        for br in &net.branches {
            let ia = net.index_of(br.a);
            let ib = net.index_of(br.b);
            for (this, other, other_node) in [(ia, ib, br.b), (ib, ia, br.a)] {
                let Some(i) = this else { continue };
                a[(i, i)] += br.g;
                match (other, other_node) {
                    (Some(j), _) => a[(i, j)] -= br.g,
                    (None, Node::Source(c)) => source_map[(i, c)] += br.g,
                    _ => {}
                }
            }
        }
        let lu = if n > 0 {
            let lu = a.lu();
            if !lu.is_invertible() {
                return Err(Error::SingularNetwork(n));
            }
            Some(lu)
        } else {
            None
        };
        let sense_idx = net
            .sense
            .iter()
            .map(|&(node, g)| {
                let src = match node {
                    Node::Source(c) => Some(c),
                    _ => None,
                };
                (net.index_of(node), src, g)
            })
            .collect();
        Ok(Self {
            net,
            lu,
            source_map,
            sense_idx,
        })
    }

    pub fn unknowns(&self) -> usize {
        self.net.unknowns.len()
    }

    fn solve_unknowns(&self, drive: &[f64]) -> Result<DVector<f64>> {
        match &self.lu {
            None => Ok(DVector::zeros(0)),
            Some(lu) => {
                let b = &self.source_map * DVector::from_column_slice(drive);
                lu.solve(&b).ok_or(Error::SingularNetwork(b.len()))
            }
        }
    }

    /// Sensed current only; skips residual bookkeeping.
    pub fn sensed_current(&self, drive: &[f64]) -> Result<f64> {
        if drive.len() != self.net.cols {
            return Err(Error::dim(format!(
                "{} column voltages for {} columns",
                drive.len(),
                self.net.cols
            )));
        }
        let x = self.solve_unknowns(drive)?;
        Ok(self
            .sense_idx
            .iter()
            .map(|&(idx, src, g)| {
                let v = match (idx, src) {
                    (Some(i), _) => x[i],
                    (None, Some(c)) => drive[c],
                    _ => 0.0,
                };
                g * v
            })
            .sum())
    }

    pub fn solve(&self, drive: &[f64]) -> Result<NodalSolution> {
        let sensed_row_current = self.sensed_current(drive)?;
        let x = self.solve_unknowns(drive)?;
        let net = &self.net;
        let at = |node: Node| -> f64 {
            match node {
                Node::Ground => 0.0,
                Node::Source(c) => drive[c],
                n => x[net.index_of(n).expect("unknown node")],
            }
        };
        let (row_v, col_v, mesh) = match net.topology {
            Topology::Lumped => {
                let row_v = (0..net.rows)
                    .map(|r| {
                        if net.index.contains_key(&Node::Row(r)) {
                            at(Node::Row(r))
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let col_v = (0..net.cols)
                    .map(|c| {
                        if net.index.contains_key(&Node::Col(c)) {
                            at(Node::Col(c))
                        } else {
                            drive[c]
                        }
                    })
                    .collect();
                (row_v, col_v, None)
            }
            Topology::Mesh => {
                let mut rj = Vec::with_capacity(net.rows * net.cols);
                let mut cj = Vec::with_capacity(net.rows * net.cols);
                for r in 0..net.rows {
                    for c in 0..net.cols {
                        rj.push(at(Node::RowJ(r, c)));
                        cj.push(at(Node::ColJ(r, c)));
                    }
                }
                let row_v = (0..net.rows).map(|r| rj[r * net.cols]).collect();
                let col_v = cj[..net.cols].to_vec();
                (
                    row_v,
                    col_v,
                    Some(MeshVoltages {
                        row_junctions: rj,
                        column_junctions: cj,
                    }),
                )
            }
        };
        let mut sol = NodalSolution {
            row_node_voltages: row_v,
            column_node_voltages: col_v,
            sensed_row_current,
            kcl_residual: 0.0,
            max_branch_current: 0.0,
            mesh,
        };
        let (res, max_branch) = net.residual(&sol, drive);
        sol.kcl_residual = res;
        sol.max_branch_current = max_branch;
        Ok(sol)
    }
}

fn check_bc(xbar: &CrossbarState, bc: &ReadBoundaryConditions) -> Result<()> {
    xbar.check_row(bc.sensed_row)?;
    xbar.check_columns(&bc.driven_column_voltages)
}

/// Lumped-line solve: row and column lines are equipotential.
pub fn solve_read(xbar: &CrossbarState, bc: &ReadBoundaryConditions) -> Result<NodalSolution> {
    check_bc(xbar, bc)?;
    PreparedRead::with_topology(
        xbar,
        bc.sensed_row,
        bc.nonsensed_row_policy,
        Topology::Lumped,
    )?
    .solve(&bc.driven_column_voltages)
}

/// Distributed-line solve with `xbar.params.line_resistance` between adjacent
/// junctions. Zero line resistance reduces to [`solve_read`].
pub fn solve_read_with_line_resistance(
    xbar: &CrossbarState,
    bc: &ReadBoundaryConditions,
) -> Result<NodalSolution> {
    check_bc(xbar, bc)?;
    let rl = xbar.params.line_resistance;
    if !(rl >= 0.0 && rl.is_finite()) {
        return Err(Error::param("line_resistance must be finite and >= 0"));
    }
    if rl == 0.0 {
        return solve_read(xbar, bc);
    }
    PreparedRead::with_topology(xbar, bc.sensed_row, bc.nonsensed_row_policy, Topology::Mesh)?
        .solve(&bc.driven_column_voltages)
}

/// Recompute the net current at every unknown node of the network described by
/// `(xbar, bc)` using the voltages stored in `solution`.
pub fn kcl_residual_check(
    xbar: &CrossbarState,
    bc: &ReadBoundaryConditions,
    solution: &NodalSolution,
) -> Result<f64> {
    check_bc(xbar, bc)?;
    let topology = if solution.mesh.is_some() {
        Topology::Mesh
    } else {
        Topology::Lumped
    };
    let net = Network::build(xbar, bc.sensed_row, bc.nonsensed_row_policy, topology);
    Ok(net.residual(solution, &bc.driven_column_voltages).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::CrossbarParams;
    use approx::assert_relative_eq;

    /// Ideal column sources.
    fn xbar(rows: usize, cols: usize, res: &[f64]) -> CrossbarState {
        let params = CrossbarParams {
            rail: None,
            driver_resistance: 0.0,
            ..CrossbarParams::default()
        };
        CrossbarState::from_resistances(rows, cols, res, params).unwrap()
    }

    fn bc(v: &[f64], sensed: usize, policy: RowPolicy) -> ReadBoundaryConditions {
        ReadBoundaryConditions {
            driven_column_voltages: v.to_vec(),
            sensed_row: sensed,
            nonsensed_row_policy: policy,
        }
    }

    #[test]
    fn single_row_has_no_unknowns() {
        let x = xbar(1, 3, &[2.0, 50.0, 3.0]);
        let b = bc(&[0.8, 0.4, 0.0], 0, RowPolicy::Floating);
        let sol = solve_read(&x, &b).unwrap();
        let (ideal, _) = x.ideal_read_row(0, &b.driven_column_voltages).unwrap();
        assert_eq!(sol.sensed_row_current, ideal);
        assert_eq!(sol.kcl_residual, 0.0);
        assert_eq!(kcl_residual_check(&x, &b, &sol).unwrap(), 0.0);
    }

    #[test]
    fn two_by_two_floating_row_voltage() {
        let res = [2.0, 50.0, 3.0, 7.0];
        let x = xbar(2, 2, &res);
        let (v1, v2) = (0.8, 0.3);
        let sol = solve_read(&x, &bc(&[v1, v2], 0, RowPolicy::Floating)).unwrap();
        let g: Vec<f64> = res.iter().map(|r| 1.0 / (r * 1e6)).collect();
        let v_float = (g[2] * v1 + g[3] * v2) / (g[2] + g[3]);
        assert_relative_eq!(sol.row_node_voltages[1], v_float, max_relative = 1e-12);
        assert_relative_eq!(
            sol.sensed_row_current,
            g[0] * v1 + g[1] * v2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn perturbed_solution_residual_scales() {
        let res = [2.0, 50.0, 2.0, 3.0, 50.0, 2.0, 2.0, 2.0, 50.0];
        let x = xbar(3, 3, &res);
        let b = bc(&[0.8, 0.0, 0.8], 1, RowPolicy::Floating);
        let sol = solve_read(&x, &b).unwrap();
        assert!(sol.kcl_residual < 1e-9 * sol.max_branch_current);
        let mut bad = sol.clone();
        bad.row_node_voltages[0] += 1e-3;
        let r1 = kcl_residual_check(&x, &b, &bad).unwrap();
        let g_sum: f64 = (0..3).map(|c| x.conductance(0, c)).sum();
        assert_relative_eq!(r1, 1e-3 * g_sum, max_relative = 1e-6);
        bad.row_node_voltages[0] += 1e-3;
        let r2 = kcl_residual_check(&x, &b, &bad).unwrap();
        assert_relative_eq!(r2, 2.0 * r1, max_relative = 1e-6);
    }

    #[test]
    fn zero_line_resistance_is_lumped() {
        let x = xbar(2, 2, &[2.0, 50.0, 3.0, 7.0]);
        let b = bc(&[0.8, 0.3], 1, RowPolicy::Floating);
        assert_eq!(
            solve_read_with_line_resistance(&x, &b).unwrap(),
            solve_read(&x, &b).unwrap()
        );
    }

    #[test]
    fn tiny_line_resistance_converges_to_lumped() {
        let mut x = xbar(3, 3, &[2.0, 50.0, 2.0, 3.0, 50.0, 2.0, 2.0, 2.0, 50.0]);
        let b = bc(&[0.8, 0.2, 0.5], 0, RowPolicy::Floating);
        let lumped = solve_read(&x, &b).unwrap().sensed_row_current;
        x.params.line_resistance = 1e-2;
        let mesh = solve_read_with_line_resistance(&x, &b).unwrap();
        assert_relative_eq!(mesh.sensed_row_current, lumped, max_relative = 1e-6);
        x.params.line_resistance = 1.0;
        let mesh = solve_read_with_line_resistance(&x, &b).unwrap();
        assert!(mesh.sensed_row_current < lumped);
        assert!(mesh.kcl_residual < 1e-9 * mesh.max_branch_current);
    }

    #[test]
    fn driver_resistance_diminishes_sensed_current() {
        let mut x = xbar(4, 4, &[2.0; 16]);
        x.params.driver_resistance = 5e5;
        let v = [0.8; 4];
        let sneak = solve_read(&x, &bc(&v, 0, RowPolicy::Floating)).unwrap();
        let (ideal, _) = x.ideal_read_row(0, &v).unwrap();
        assert!(sneak.sensed_row_current < ideal);
        assert!(sneak.kcl_residual < 1e-9 * sneak.max_branch_current);
    }

    #[test]
    fn bad_inputs() {
        let x = xbar(2, 2, &[2.0; 4]);
        assert!(solve_read(&x, &bc(&[0.8], 0, RowPolicy::Floating)).is_err());
        assert!(matches!(
            solve_read(&x, &bc(&[0.8, 0.8], 2, RowPolicy::Floating)),
            Err(Error::OutOfBounds { .. })
        ));
    }
}
