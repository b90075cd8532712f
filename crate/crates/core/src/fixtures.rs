//! The published single-arm examples, built exactly as printed.

use thiserror::Error;

use crate::model::ArmModel;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown fixture `{0}`")]
pub struct UnknownFixture(pub String);

pub const FIXTURE_NAMES: [&str; 12] = [
    "circular4",
    "restart5",
    "restart10",
    "restart100",
    "randomwalk5",
    "akbarzadeh3",
    "ninomora3-indexable",
    "ninomora3-nonindexable",
    "fivestate-nonindexable",
    "fivestate-indexable-mod1",
    "fivestate-indexable-mod2",
    "fivestate-indexable-beta99",
];

const BETA: f64 = 0.9;

fn build(p0: Vec<Vec<f64>>, p1: Vec<Vec<f64>>, r: Vec<[f64; 2]>, beta: f64) -> ArmModel {
    ArmModel::new(p0, p1, r, beta).expect("catalog fixtures are valid")
}

fn rows<const K: usize>(m: [[f64; K]; K]) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

fn normalized(mut m: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for row in &mut m {
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
    }
    m
}

fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..m.len()).map(|j| m.iter().map(|row| row[j]).collect()).collect()
}

/// Passive: advance one state w.p. 0.9 (staying put at the top), fall back
/// to state 1 w.p. 0.1. Active: always back to state 1.
fn restart(k: usize, decay: f64) -> ArmModel {
    let p0 = (0..k)
        .map(|s| {
            let mut row = vec![0.0; k];
            row[0] += 0.1;
            row[(s + 1).min(k - 1)] += 0.9;
            row
        })
        .collect();
    let p1 = (0..k)
        .map(|_| {
            let mut row = vec![0.0; k];
            row[0] = 1.0;
            row
        })
        .collect();
    let r = (1..=k as i32).map(|s| [decay.powi(s), 0.0]).collect();
    build(p0, p1, r, BETA)
}

fn circular4() -> ArmModel {
    let p0 = rows([
        [0.5, 0.0, 0.0, 0.5],
        [0.5, 0.5, 0.0, 0.0],
        [0.0, 0.5, 0.5, 0.0],
        [0.0, 0.0, 0.5, 0.5],
    ]);
    let p1 = transpose(&p0);
    build(p0, p1, vec![[-1.0, -1.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0]], BETA)
}

fn randomwalk5() -> ArmModel {
    let p = rows([
        [0.3, 0.7, 0.0, 0.0, 0.0],
        [0.1, 0.2, 0.7, 0.0, 0.0],
        [0.0, 0.1, 0.2, 0.7, 0.0],
        [0.0, 0.0, 0.1, 0.2, 0.7],
        [0.0, 0.0, 0.0, 0.3, 0.7],
    ]);
    let r = (1..=5).map(|s| [0.0, 0.9f64.powi(s)]).collect();
    build(p.clone(), p, r, BETA)
}

/// Passive row 1 is printed as summing to 0.9998; it is rescaled.
fn akbarzadeh3() -> ArmModel {
    build(
        normalized(rows([
            [0.3629, 0.5026, 0.1343],
            [0.0823, 0.7534, 0.1643],
            [0.2460, 0.0294, 0.7246],
        ])),
        rows([
            [0.1719, 0.1749, 0.6532],
            [0.0547, 0.9317, 0.0136],
            [0.1547, 0.6271, 0.2182],
        ]),
        vec![[0.0, 0.44138], [0.0, 0.8033], [0.0, 0.14257]],
        BETA,
    )
}

fn ninomora3_indexable() -> ArmModel {
    build(
        rows([
            [0.1810, 0.4801, 0.3389],
            [0.2676, 0.2646, 0.4678],
            [0.5304, 0.2843, 0.1853],
        ]),
        rows([
            [0.2841, 0.4827, 0.2332],
            [0.5131, 0.0212, 0.4657],
            [0.4612, 0.0081, 0.5307],
        ]),
        vec![[0.0, 0.9016], [0.0, 0.10949], [0.0, 0.01055]],
        BETA,
    )
}

fn ninomora3_nonindexable() -> ArmModel {
    build(
        rows([
            [0.1902, 0.4156, 0.3942],
            [0.5676, 0.4191, 0.0133],
            [0.0191, 0.1097, 0.8712],
        ]),
        rows([
            [0.7796, 0.0903, 0.1301],
            [0.1903, 0.1863, 0.6234],
            [0.2901, 0.3901, 0.3198],
        ]),
        vec![[0.458, 0.9631], [0.5308, 0.7963], [0.6873, 0.1057]],
        BETA,
    )
}

fn fivestate_kernels() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let p0 = rows([
        [0.1502, 0.0400, 0.4156, 0.0300, 0.3642],
        [0.4000, 0.3500, 0.0800, 0.1200, 0.0500],
        [0.5276, 0.0400, 0.3991, 0.0200, 0.0133],
        [0.0500, 0.1000, 0.1500, 0.2000, 0.5000],
        [0.0191, 0.0100, 0.0897, 0.0300, 0.8512],
    ]);
    let p1 = rows([
        [0.7196, 0.0500, 0.0903, 0.0100, 0.1301],
        [0.5500, 0.2000, 0.0500, 0.0800, 0.1200],
        [0.1903, 0.0100, 0.1663, 0.0100, 0.6234],
        [0.2000, 0.0500, 0.1500, 0.1000, 0.5000],
        [0.2501, 0.0100, 0.3901, 0.0300, 0.3198],
    ]);
    (p0, p1)
}

fn fivestate(r: [[f64; 2]; 5], beta: f64) -> ArmModel {
    let (p0, p1) = fivestate_kernels();
    build(p0, p1, r.to_vec(), beta)
}

const FIVESTATE_NONINDEXABLE_R: [[f64; 2]; 5] = [
    [0.4580, 0.9631],
    [0.5100, 0.8100],
    [0.5308, 0.7963],
    [0.6710, 0.1061],
    [0.6873, 0.1057],
];

const FIVESTATE_MOD1_R: [[f64; 2]; 5] = [
    [0.4580, 0.9631],
    [0.5100, 0.8100],
    [0.6508, 0.7963],
    [0.6710, 0.6061],
    [0.6873, 0.5057],
];

const FIVESTATE_MOD2_R: [[f64; 2]; 5] = [
    [0.4580, 0.5057],
    [0.5100, 0.6061],
    [0.6508, 0.7963],
    [0.6710, 0.8100],
    [0.6873, 0.9631],
];

pub fn load_fixture(name: &str) -> Result<ArmModel, UnknownFixture> {
    Ok(match name {
        "circular4" => circular4(),
        "restart5" => restart(5, 0.9),
        "restart10" => restart(10, 0.95),
        "restart100" => restart(100, 0.99),
        "randomwalk5" => randomwalk5(),
        "akbarzadeh3" => akbarzadeh3(),
        "ninomora3-indexable" => ninomora3_indexable(),
        "ninomora3-nonindexable" => ninomora3_nonindexable(),
        "fivestate-nonindexable" => fivestate(FIVESTATE_NONINDEXABLE_R, BETA),
        "fivestate-indexable-mod1" => fivestate(FIVESTATE_MOD1_R, BETA),
        "fivestate-indexable-mod2" => fivestate(FIVESTATE_MOD2_R, BETA),
        "fivestate-indexable-beta99" => fivestate(FIVESTATE_MOD1_R, 0.99),
        _ => return Err(UnknownFixture(name.to_string())),
    })
}
