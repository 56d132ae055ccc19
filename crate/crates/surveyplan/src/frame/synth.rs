//! Deterministic synthetic frames, mainly for worked examples and for
//! exercising the full pipeline in tests without shipping real data.

use csv::StringRecord;
use rand::Rng;
use std::collections::BTreeMap;

use super::Frame;
use crate::rng;

/// Shape of a synthetic frame.
///
/// `psu_effect` controls how much PSU-level means spread out around their
/// stratum mean: 0 gives homogeneous PSUs (intra-cluster correlation near
/// zero), larger values push the correlation towards one.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub strata: usize,
    pub psus_per_stratum: usize,
    /// Inclusive range for units per PSU.
    pub units_per_psu: (usize, usize),
    pub binary_vars: usize,
    pub quant_vars: usize,
    pub psu_effect: f64,
    /// Number of domain categories; strata are assigned round-robin.
    /// 0 or 1 mean a single `POP` domain.
    pub domains: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            strata: 4,
            psus_per_stratum: 12,
            units_per_psu: (200, 800),
            binary_vars: 2,
            quant_vars: 1,
            psu_effect: 0.5,
            domains: 2,
        }
    }
}

/// Two independent standard normals from two uniforms.
fn box_muller<R: Rng>(rng: &mut R) -> (f64, f64) {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    let r = (-2.0 * u1.ln()).sqrt();
    let t = std::f64::consts::TAU * u2;
    (r * t.cos(), r * t.sin())
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    box_muller(rng).0
}

/// Generate a frame. The same `(spec, seed)` pair always yields the same
/// frame, independent of platform or thread count.
pub fn synth_frame(spec: &SynthSpec, seed: u64) -> Frame {
    let n_vars = spec.binary_vars + spec.quant_vars;
    let mut headers = vec!["ID".to_string(), "PSU_ID".to_string(), "STRATUM".to_string(), "DOM".to_string()];
    for j in 0..spec.binary_vars {
        headers.push(format!("B{}", j + 1));
    }
    for j in 0..spec.quant_vars {
        headers.push(format!("Y{}", j + 1));
    }

    let mut frame = Frame {
        headers,
        records: Vec::new(),
        unit_id: Vec::new(),
        psu_id: Vec::new(),
        stratum: Vec::new(),
        targets: vec![Vec::new(); n_vars],
        domain: Some(Vec::new()),
        weight: None,
        by_psu: BTreeMap::new(),
        strata_order: Vec::new(),
    };

    for h in 0..spec.strata {
        let stratum = format!("S{}", h + 1);
        frame.strata_order.push(stratum.clone());
        let dom = if spec.domains <= 1 {
            "POP".to_string()
        } else {
            format!("D{}", h % spec.domains + 1)
        };
        let mut srng = rng::stream(seed, "synth-stratum", &stratum);
        // Stratum-level baselines: binary prevalences away from the
        // boundaries, quantitative levels spread across strata.
        let base_p: Vec<f64> = (0..spec.binary_vars).map(|_| srng.random_range(0.2..0.8)).collect();
        let base_y: Vec<f64> = (0..spec.quant_vars)
            .map(|_| srng.random_range(50.0..150.0) * (1.0 + h as f64 / 2.0))
            .collect();

        for i in 0..spec.psus_per_stratum {
            let psu = format!("{}P{:03}", stratum, i + 1);
            let mut prng = rng::stream(seed, "synth-psu", &psu);
            let units = prng.random_range(spec.units_per_psu.0..=spec.units_per_psu.1);
            // PSU-level shifts shared by all units of the cluster.
            let shift_p: Vec<f64> = (0..spec.binary_vars)
                .map(|_| spec.psu_effect * 0.15 * normal(&mut prng))
                .collect();
            let shift_y: Vec<f64> = (0..spec.quant_vars)
                .map(|_| spec.psu_effect * 0.25 * normal(&mut prng))
                .collect();

            for k in 0..units {
                let row = frame.records.len();
                let unit = format!("{}U{:04}", psu, k + 1);
                let mut rec = vec![unit.clone(), psu.clone(), stratum.clone(), dom.clone()];
                for j in 0..spec.binary_vars {
                    let p = (base_p[j] + shift_p[j]).clamp(0.02, 0.98);
                    let v = if prng.random::<f64>() < p { 1.0 } else { 0.0 };
                    frame.targets[j].push(v);
                    rec.push(if v == 1.0 { "1".into() } else { "0".into() });
                }
                for j in 0..spec.quant_vars {
                    let v = (base_y[j] * (1.0 + shift_y[j]) + base_y[j] * 0.2 * normal(&mut prng)).max(0.0);
                    frame.targets[spec.binary_vars + j].push(v);
                    rec.push(format!("{:.4}", v));
                }
                frame.unit_id.push(unit);
                frame.psu_id.push(psu.clone());
                frame.stratum.push(stratum.clone());
                frame.domain.as_mut().unwrap().push(dom.clone());
                frame.by_psu.entry(psu.clone()).or_default().push(row);
                frame.records.push(StringRecord::from(rec));
            }
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twostage::rho_from_population;

    #[test]
    fn same_seed_same_frame() {
        let spec = SynthSpec { strata: 2, psus_per_stratum: 3, units_per_psu: (5, 9), ..Default::default() };
        let a = synth_frame(&spec, 42);
        let b = synth_frame(&spec, 42);
        assert_eq!(a.records, b.records);
        let c = synth_frame(&spec, 43);
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn shape_follows_the_spec() {
        let spec = SynthSpec {
            strata: 3,
            psus_per_stratum: 4,
            units_per_psu: (10, 20),
            binary_vars: 1,
            quant_vars: 2,
            psu_effect: 0.0,
            domains: 2,
        };
        let f = synth_frame(&spec, 7);
        assert_eq!(f.strata_order.len(), 3);
        assert_eq!(f.by_psu.len(), 12);
        assert!(f.by_psu.values().all(|v| (10..=20).contains(&v.len())));
        assert_eq!(f.targets.len(), 3);
        assert!(f.targets[0].iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(f.domain_categories(), vec!["D1", "D2"]);
        assert_eq!(f.headers, vec!["ID", "PSU_ID", "STRATUM", "DOM", "B1", "Y1", "Y2"]);
    }

    #[test]
    fn psu_effect_drives_intra_cluster_correlation() {
        let mut rho = [0.0f64; 2];
        for (i, effect) in [0.0, 2.0].into_iter().enumerate() {
            let spec = SynthSpec {
                strata: 1,
                psus_per_stratum: 30,
                units_per_psu: (100, 100),
                binary_vars: 0,
                quant_vars: 1,
                psu_effect: effect,
                domains: 1,
            };
            let f = synth_frame(&spec, 11);
            let clusters: Vec<&str> = f.psu_id.iter().map(|s| s.as_str()).collect();
            rho[i] = rho_from_population(&clusters, &f.targets[0]).unwrap();
        }
        assert!(rho[0] < 0.05, "homogeneous PSUs should give rho ~ 0, got {}", rho[0]);
        assert!(rho[1] > 0.3, "strong PSU effect should give a large rho, got {}", rho[1]);
    }
}
