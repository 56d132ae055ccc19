//! Plain data records for design inputs and allocation outputs.

/// One design stratum with population moments for every target variable.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumInfo {
    /// Stratum identifier (kept as text; often numeric codes like "1000").
    pub id: String,
    /// Population size N_h in elementary units.
    pub pop: u64,
    /// Per-variable population means (proportions for binary variables).
    pub means: Vec<f64>,
    /// Per-variable population standard deviations.
    pub stdevs: Vec<f64>,
    /// Unit interviewing cost c_h (relative scale allowed).
    pub cost: f64,
    /// Take-all stratum: every unit is enumerated, no sampling error.
    pub census: bool,
    /// One category label per domain type (DOM1..DOMK).
    pub domains: Vec<String>,
}

/// The strata table plus its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct StrataTable {
    pub strata: Vec<StratumInfo>,
    /// Number of target variables J.
    pub n_vars: usize,
    /// Number of domain types K.
    pub n_domain_types: usize,
}

impl StrataTable {
    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn total_pop(&self) -> u64 {
        self.strata.iter().map(|s| s.pop).sum()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.strata.iter().position(|s| s.id == id)
    }
}

/// One row of the precision table: a domain label and a CV ceiling per
/// target variable.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionConstraints {
    pub domain: String,
    pub cvs: Vec<f64>,
}

/// One primary sampling unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PsuRecord {
    pub id: String,
    pub stratum: String,
    /// Measure of size in elementary units.
    pub mos: u64,
}

/// Per-stratum second-stage design parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignParams {
    pub stratum: String,
    /// Average size of a final-stage unit in elementary units (≥ 1).
    pub delta: f64,
    /// Minimum number of final-stage units interviewed per selected PSU.
    pub minimum: u64,
}

/// Per-stratum intraclass correlations, one pair per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoRow {
    pub stratum: String,
    /// Self-representing part (1 by convention).
    pub rho_sr: Vec<f64>,
    /// Sampled part.
    pub rho_nsr: Vec<f64>,
}

/// Per-stratum starting design-effect factors, one per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct DeftRow {
    pub stratum: String,
    pub deft: Vec<f64>,
}

/// Per-stratum estimator-effect factors, one per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct EffstRow {
    pub stratum: String,
    pub effst: Vec<f64>,
}

/// All planning inputs, loaded and cross-checked.
#[derive(Debug, Clone)]
pub struct DesignInputs {
    pub strata: StrataTable,
    pub constraints: Vec<PrecisionConstraints>,
    pub psus: Option<Vec<PsuRecord>>,
    pub design: Option<Vec<DesignParams>>,
    pub rho: Option<Vec<RhoRow>>,
    pub deft: Option<Vec<DeftRow>>,
    pub effst: Option<Vec<EffstRow>>,
}

/// One row of the iteration trace of the two-stage algorithm. Iteration 0
/// is the pure one-stage solve, with zero PSU counts by convention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationRow {
    pub iteration: usize,
    pub psu_sr: u64,
    pub psu_nsr: u64,
    pub psu_total: u64,
    pub ssu_total: u64,
}

/// Coefficients of variation for one domain category, one per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub domain: String,
    pub cvs: Vec<f64>,
}

/// Effect of relaxing one precision ceiling by 10%.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub domain: String,
    /// 1-based target-variable index.
    pub var: usize,
    pub planned_cv: f64,
    pub expected_cv: f64,
    /// Change in total sample size when this ceiling alone is relaxed 10%.
    pub delta_n: i64,
}

/// Design-effect trace: per iteration and stratum, deft per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct DeftTraceRow {
    pub iteration: usize,
    pub stratum: String,
    pub deft: Vec<f64>,
}

/// Final allocation for one stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumAllocation {
    pub stratum: String,
    /// Final-stage sample size n_h (elementary units).
    pub ssu: u64,
    /// Self-representing PSUs (all included).
    pub psu_sr: u64,
    /// PSUs to draw from the sampled part.
    pub psu_nsr: u64,
    /// Measure-of-size threshold separating the two parts (0 in one-stage
    /// designs).
    pub threshold: f64,
}

/// Output of the one- and two-stage allocators.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    /// Per-stratum allocation, in strata-table order.
    pub rows: Vec<StratumAllocation>,
    /// Proportional-to-size reference allocation of the same total.
    pub alloc_prop: Vec<u64>,
    /// Equal-share reference allocation of the same total.
    pub alloc_equal: Vec<u64>,
    /// Iteration trace; a single `(0,0,0,0,total)` row for one-stage runs.
    pub iterations: Vec<IterationRow>,
    /// Expected CVs of the final allocation, per constrained domain
    /// category.
    pub expected_cv: Vec<CvRow>,
    /// The ceilings the allocation was solved against.
    pub planned_cv: Vec<CvRow>,
    /// One row per (domain category, variable) ceiling.
    pub sensitivity: Vec<SensitivityRow>,
    /// deft per iteration/stratum/variable (two-stage only).
    pub deft_trace: Vec<DeftTraceRow>,
    /// Echo of solver parameters, for the run manifest.
    pub params: Vec<(String, String)>,
    /// False when the fixed point hit its iteration cap.
    pub converged: bool,
    /// Whether PSU columns are meaningful.
    pub two_stage: bool,
}

impl AllocationResult {
    pub fn total_ssu(&self) -> u64 {
        self.rows.iter().map(|r| r.ssu).sum()
    }

    pub fn total_psu(&self) -> u64 {
        self.rows.iter().map(|r| r.psu_sr + r.psu_nsr).sum()
    }

    pub fn ssu_by_stratum(&self, id: &str) -> Option<u64> {
        self.rows.iter().find(|r| r.stratum == id).map(|r| r.ssu)
    }
}
