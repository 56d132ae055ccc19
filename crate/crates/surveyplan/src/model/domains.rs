//! Domain layout and resolution of precision rows to strata sets.
//!
//! Estimation domains are unions of whole strata: every stratum carries one
//! category label per domain type (columns DOM1..DOMK), and a domain is the
//! set of strata sharing a label. A precision row can address either
//!
//! * one category, by its label (`north`), or
//! * a whole domain type, with the reserved label `DOM<t>` — the row's
//!   ceilings then apply to every category of type t.
//!
//! Two rows claiming the same (type, category) pair conflict and are
//! rejected rather than silently merged.

use crate::error::{Error, Result};
use crate::model::records::{PrecisionConstraints, StrataTable};

/// Category structure of the strata table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainLayout {
    /// Number of domain types K.
    pub n_types: usize,
    /// Category labels per type, in order of first appearance.
    pub categories: Vec<Vec<String>>,
    /// For each type, the category index of every stratum.
    pub stratum_category: Vec<Vec<usize>>,
}

impl DomainLayout {
    /// Strata belonging to one category.
    pub fn members(&self, dom_type: usize, category: usize) -> Vec<usize> {
        self.stratum_category[dom_type]
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == category)
            .map(|(h, _)| h)
            .collect()
    }
}

/// Build the layout from the strata table's DOM columns.
pub fn build_layout(strata: &StrataTable) -> DomainLayout {
    let k = strata.n_domain_types;
    let mut categories: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut stratum_category: Vec<Vec<usize>> = vec![Vec::with_capacity(strata.len()); k];
    for s in &strata.strata {
        for t in 0..k {
            let label = &s.domains[t];
            let idx = match categories[t].iter().position(|c| c == label) {
                Some(i) => i,
                None => {
                    categories[t].push(label.clone());
                    categories[t].len() - 1
                }
            };
            stratum_category[t].push(idx);
        }
    }
    DomainLayout {
        n_types: k,
        categories,
        stratum_category,
    }
}

/// One precision row resolved to a concrete domain category.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainConstraint {
    /// 0-based domain-type index.
    pub dom_type: usize,
    /// Category label.
    pub category: String,
    /// Member strata (indices into the strata table).
    pub strata_idx: Vec<usize>,
    /// CV ceiling per target variable.
    pub cvs: Vec<f64>,
}

fn type_level(label: &str, n_types: usize) -> Option<usize> {
    let rest = label
        .strip_prefix("DOM")
        .or_else(|| label.strip_prefix("dom"))
        .or_else(|| label.strip_prefix("Dom"))?;
    let t: usize = rest.parse().ok()?;
    (1..=n_types).contains(&t).then(|| t - 1)
}

/// Resolve precision rows against the layout. Returns one constraint per
/// (row, category) pair, in deterministic order: rows in file order,
/// type-level rows fanned out over categories in first-appearance order.
pub fn resolve_constraints(
    strata: &StrataTable,
    layout: &DomainLayout,
    rows: &[PrecisionConstraints],
) -> Result<Vec<DomainConstraint>> {
    let mut claimed: Vec<Vec<Option<usize>>> = layout
        .categories
        .iter()
        .map(|c| vec![None; c.len()])
        .collect();
    let mut out = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        if row.cvs.len() != strata.n_vars {
            return Err(Error::schema(format!(
                "precision row {} has {} ceilings, expected {}",
                row.domain,
                row.cvs.len(),
                strata.n_vars
            )));
        }
        let targets: Vec<(usize, usize)> = if let Some(t) = type_level(&row.domain, layout.n_types)
        {
            (0..layout.categories[t].len()).map(|c| (t, c)).collect()
        } else {
            let mut hits = Vec::new();
            for t in 0..layout.n_types {
                if let Some(c) = layout.categories[t].iter().position(|c| *c == row.domain) {
                    hits.push((t, c));
                }
            }
            match hits.len() {
                0 => {
                    return Err(Error::Reference(format!(
                        "precision row {}: no stratum belongs to such a category",
                        row.domain
                    )))
                }
                1 => hits,
                _ => {
                    return Err(Error::schema(format!(
                        "precision row {}: label is a category of {} domain types; rename or use DOM<t>",
                        row.domain,
                        hits.len()
                    )))
                }
            }
        };
        for (t, c) in targets {
            if let Some(prev) = claimed[t][c] {
                return Err(Error::schema(format!(
                    "precision rows {} and {} both constrain category {} of domain type {}",
                    rows[prev].domain,
                    row.domain,
                    layout.categories[t][c],
                    t + 1
                )));
            }
            claimed[t][c] = Some(r);
            out.push(DomainConstraint {
                dom_type: t,
                category: layout.categories[t][c].clone(),
                strata_idx: layout.members(t, c),
                cvs: row.cvs.clone(),
            });
        }
    }
    Ok(out)
}

/// Validate that every precision row resolves and no category is claimed
/// twice. Returns the layout for further use.
pub fn validate_domains(
    strata: &StrataTable,
    rows: &[PrecisionConstraints],
) -> Result<DomainLayout> {
    let layout = build_layout(strata);
    resolve_constraints(strata, &layout, rows)?;
    Ok(layout)
}
