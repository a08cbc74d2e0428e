//! Residues recorded from an independent brute-force evaluation of the trace
//! formula (full Γ_p tables mod p^e), checked against the whole pipeline.

use std::collections::BTreeMap;

use hgm_amortized::{hypergeometric_traces, Fraction, HypergeometricDatum};
use serde_json::Value;

type Rows = Vec<(u64, u32, String)>;

const GOLDEN: &str = include_str!("data/golden_traces.jsonl");

#[test]
fn pipeline_reproduces_golden_residues() {
    let mut groups: BTreeMap<(String, String), Rows> = BTreeMap::new();
    for line in GOLDEN.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).unwrap();
        let key = (v["datum"].as_str().unwrap().to_string(), v["z"].as_str().unwrap().to_string());
        let p = v["p"].as_u64().unwrap();
        let e = v["e"].as_u64().unwrap() as u32;
        groups.entry(key).or_default().push((p, e, v["residue"].as_str().unwrap().to_string()));
    }
    assert_eq!(groups.len(), 7);
    let mut checked = 0;
    for ((datum, z), rows) in groups {
        let d = HypergeometricDatum::parse(&datum).unwrap();
        let z: Fraction = z.parse().unwrap();
        let limit = rows.iter().map(|r| r.0).max().unwrap();
        let res = hypergeometric_traces(&d, &z, limit, None).unwrap();
        for (p, e, want) in rows {
            let t = res.iter().find(|t| t.p == p).unwrap();
            assert_eq!(t.e, e);
            let got = t.residue.as_ref().unwrap_or_else(|| panic!("{datum} p = {p} has no residue"));
            assert_eq!(got.value().to_string(), want, "{datum} z = {z} p = {p}");
            checked += 1;
        }
    }
    assert_eq!(checked, 399);
}
