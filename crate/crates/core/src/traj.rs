//! Time-stamped trajectory records shared by both engines.

use serde::{Deserialize, Serialize};

use crate::lattice::Grid;

/// State snapshot on the output time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    /// Continuous component, one value per site of the engine's grid.
    pub u_c: Vec<f64>,
    /// Discrete component, one count per macrosite.
    pub u_d: Vec<i64>,
}

/// Which slow channel produced a jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKind {
    SlowMixed,
    SlowD,
}

/// One logged jump of the discrete component (right limit at the jump time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub t: f64,
    pub kind: JumpKind,
    /// Macrosite, 1-based.
    pub l: usize,
    /// Reaction id (position in the network spec).
    pub r: usize,
    pub gamma_d: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_before: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_after: Option<Vec<i64>>,
}

/// Why a run stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationReason {
    EventBudget,
    JumpBudget,
    WallClock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Grid,
    /// Population scale of the jump engine; absent for the limit engine.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub snapshots: Vec<Snapshot>,
    pub jumps: Vec<JumpRecord>,
    /// Set when a budget stopped the run before the horizon; the snapshots
    /// up to that point are still valid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncated: Option<TruncationReason>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Trajectory {
    /// Snapshot CSV: header `t,site_1..site_N,macro_1..macro_k`, one row per
    /// snapshot. Numbers use the shortest round-trip decimal form.
    pub fn to_csv(&self) -> String {
        let n = self.grid.n_sites();
        let k = self.grid.n_macro();
        let mut out = String::from("t");
        for j in 1..=n {
            out.push_str(&format!(",site_{j}"));
        }
        for l in 1..=k {
            out.push_str(&format!(",macro_{l}"));
        }
        out.push('\n');
        for s in &self.snapshots {
            out.push_str(&format!("{}", s.t));
            for v in &s.u_c {
                out.push_str(&format!(",{v}"));
            }
            for d in &s.u_d {
                out.push_str(&format!(",{d}"));
            }
            out.push('\n');
        }
        out
    }

    /// Jump log as JSON lines, one object per discrete jump.
    pub fn jumps_to_jsonl(&self) -> String {
        let mut out = String::new();
        for j in &self.jumps {
            out.push_str(&serde_json::to_string(j).expect("jump record serializes"));
            out.push('\n');
        }
        out
    }

    /// Expected snapshot times `0, dt, 2dt, …, horizon`.
    pub fn output_times(horizon: f64, dt_out: f64) -> Vec<f64> {
        let steps = (horizon / dt_out).round() as usize;
        let mut ts: Vec<f64> = (0..=steps).map(|i| i as f64 * dt_out).collect();
        if let Some(last) = ts.last_mut() {
            *last = horizon;
        }
        ts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let grid = Grid::new(2, 1).unwrap();
        let t = Trajectory {
            grid,
            mu: Some(10.0),
            snapshots: vec![Snapshot {
                t: 0.5,
                u_c: vec![1.0, 0.25],
                u_d: vec![3],
            }],
            jumps: vec![],
            truncated: None,
            warnings: vec![],
        };
        assert_eq!(t.to_csv(), "t,site_1,site_2,macro_1\n0.5,1,0.25,3\n");
    }

    #[test]
    fn jsonl_omits_absent_nu() {
        let grid = Grid::new(2, 1).unwrap();
        let mut t = Trajectory {
            grid,
            mu: None,
            snapshots: vec![],
            jumps: vec![JumpRecord {
                t: 0.125,
                kind: JumpKind::SlowD,
                l: 1,
                r: 4,
                gamma_d: -1,
                nu_before: None,
                nu_after: None,
            }],
            truncated: None,
            warnings: vec![],
        };
        assert_eq!(
            t.jumps_to_jsonl(),
            "{\"t\":0.125,\"kind\":\"slow_d\",\"l\":1,\"r\":4,\"gamma_d\":-1}\n"
        );
        t.jumps[0].nu_before = Some(vec![1]);
        assert!(t.jumps_to_jsonl().contains("\"nu_before\":[1]"));
    }

    #[test]
    fn output_grid_counts() {
        let ts = Trajectory::output_times(1.0, 0.1);
        assert_eq!(ts.len(), 11);
        assert_eq!(ts[0], 0.0);
        assert_eq!(*ts.last().unwrap(), 1.0);
    }
}
