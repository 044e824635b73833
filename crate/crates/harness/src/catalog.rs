//! The named designs and true-parameter sets the coverage studies draw
//! from. Imbalance figures ride along as descriptive metadata; nothing here
//! recomputes them.

use fidmix_core::model::{ModelError, ModelSpec, ParameterVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DesignKind {
    /// Groups, subgroups within groups, error. `k_per_subgroup` is
    /// flattened in group order.
    Nested {
        j_per_group: Vec<usize>,
        k_per_subgroup: Vec<usize>,
    },
    /// Two crossed factors with interaction. `k_per_cell` is row-major
    /// over (A, B).
    Crossed {
        a_levels: usize,
        b_levels: usize,
        k_per_cell: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignEntry {
    pub id: String,
    pub kind: DesignKind,
    /// Total observation count implied by the layout.
    pub n: usize,
    /// Khuri imbalance measures: (phi_1, phi_2, phi) for nested designs,
    /// (phi,) for crossed ones. 1.0 means balanced.
    pub imbalance: Vec<f64>,
}

impl DesignEntry {
    pub fn build(&self) -> Result<ModelSpec, ModelError> {
        match &self.kind {
            DesignKind::Nested { j_per_group, k_per_subgroup } => {
                ModelSpec::two_fold_nested(j_per_group.len(), j_per_group, k_per_subgroup)
            }
            DesignKind::Crossed { a_levels, b_levels, k_per_cell } => {
                ModelSpec::two_factor_crossed(*a_levels, *b_levels, k_per_cell)
            }
        }
    }
}

fn nested(id: &str, j: &[usize], k: &[usize], imbalance: [f64; 3]) -> DesignEntry {
    DesignEntry {
        id: id.into(),
        kind: DesignKind::Nested { j_per_group: j.to_vec(), k_per_subgroup: k.to_vec() },
        n: k.iter().sum(),
        imbalance: imbalance.to_vec(),
    }
}

fn crossed(id: &str, a: usize, b: usize, k: &[usize], phi: f64) -> DesignEntry {
    DesignEntry {
        id: id.into(),
        kind: DesignKind::Crossed { a_levels: a, b_levels: b, k_per_cell: k.to_vec() },
        n: k.iter().sum(),
        imbalance: vec![phi],
    }
}

/// The eleven benchmark designs: five nested, six crossed.
pub fn catalog() -> Vec<DesignEntry> {
    vec![
        nested("MI-1", &[2, 1, 1, 1, 1], &[4, 4, 2, 2, 2, 2], [0.9000, 0.8889, 0.8090]),
        nested("MI-2", &[4, 2, 1], &[1, 5, 5, 5, 1, 5, 1], [0.7778, 0.7337, 0.6076]),
        nested("MI-3", &[3, 3, 3], &[2; 9], [1.0, 1.0, 1.0]),
        nested("MI-4", &[1, 1, 1, 1, 1, 7], &[2; 12], [0.4444, 1.0, 0.4444]),
        nested("MI-5", &[2, 2, 2], &[1, 1, 1, 1, 1, 7], [1.0, 0.4444, 0.4444]),
        crossed("MII-1", 4, 3, &[2, 1, 3, 2, 1, 1, 2, 2, 2, 1, 2, 3], 0.8768),
        crossed("MII-2", 3, 3, &[4, 1, 1, 4, 1, 1, 4, 1, 1], 0.6667),
        crossed("MII-3", 3, 3, &[4, 4, 4, 1, 1, 1, 1, 1, 1], 0.6667),
        crossed("MII-4", 3, 4, &[8, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1], 0.4011),
        crossed("MII-5", 5, 3, &[1, 2, 2, 5, 2, 7, 2, 2, 2, 2, 4, 2, 3, 2, 2], 0.7619),
        crossed("MII-6", 3, 3, &[2; 9], 1.0),
    ]
}

/// Nested layout of a two-generation breeding study: 15 dams mated to 2 or
/// 3 sires each (37 sires in all, the heavier dams first), `k_per_sire`
/// offspring measured per sire. No published imbalance figure exists for
/// it, so the metadata is empty.
pub fn pedigree_design(k_per_sire: usize) -> DesignEntry {
    let mut j = vec![3usize; 7];
    j.extend(std::iter::repeat(2).take(8));
    let subgroups: usize = j.iter().sum();
    DesignEntry {
        id: format!("PED-{k_per_sire}"),
        kind: DesignKind::Nested {
            j_per_group: j,
            k_per_subgroup: vec![k_per_sire; subgroups],
        },
        n: subgroups * k_per_sire,
        imbalance: vec![],
    }
}

/// Looks an id up in the catalog, accepting `PED-<k>` for the breeding
/// layout as well.
pub fn design(id: &str) -> Option<DesignEntry> {
    if let Some(k) = id.strip_prefix("PED-") {
        let k: usize = k.parse().ok()?;
        return (k > 0).then(|| pedigree_design(k));
    }
    catalog().into_iter().find(|d| d.id == id)
}

/// True values for one study scenario. Scales are stored as variances,
/// matching how the results are reported; the sampler wants standard
/// deviations, see [`ParameterSet::truth`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub id: String,
    pub beta: Vec<f64>,
    /// One variance per random effect, error last.
    pub variances: Vec<f64>,
}

impl ParameterSet {
    pub fn truth(&self) -> ParameterVector {
        ParameterVector::new(
            self.beta.clone(),
            self.variances.iter().map(|v| v.sqrt()).collect(),
        )
    }

    /// Standard deviation of one draw with every effect stacked, the scale
    /// the default grid width hangs off.
    pub fn total_sd(&self) -> f64 {
        self.variances.iter().sum::<f64>().sqrt()
    }
}

fn pset(id: &str, beta: &[f64], variances: &[f64]) -> ParameterSet {
    ParameterSet { id: id.into(), beta: beta.to_vec(), variances: variances.to_vec() }
}

/// PI-x pair with the nested designs, PII-x with the crossed ones, and
/// P-PED is the REML-style scenario for the breeding layout.
pub fn parameter_sets() -> Vec<ParameterSet> {
    vec![
        pset("PI-1", &[0.0], &[0.2, 0.1, 0.7]),
        pset("PI-2", &[0.0], &[0.4, 0.3, 0.3]),
        pset("PI-3", &[0.0], &[0.2, 0.7, 0.1]),
        pset("PI-4", &[0.0], &[25.0, 4.0, 16.0]),
        pset("PI-5", &[0.0], &[1.0, 1.0, 1.0]),
        pset("PII-1", &[0.0], &[0.1, 0.5, 0.1, 0.3]),
        pset("PII-2", &[0.0], &[0.1, 0.3, 0.1, 0.5]),
        pset("PII-3", &[0.0], &[0.1, 0.1, 0.3, 0.5]),
        pset("PII-4", &[0.0], &[0.1, 0.1, 0.5, 0.3]),
        pset("PII-5", &[0.0], &[1.0, 1.0, 1.0, 1.0]),
        pset("P-PED", &[44.92], &[8.90, 2.65, 24.81]),
    ]
}

pub fn parameter_set(id: &str) -> Option<ParameterSet> {
    parameter_sets().into_iter().find(|p| p.id == id)
}
