//! CSV emission for policy matrices, index reports and simulation traces.
//!
//! Floats are written like C's `%.12g`; rows end with `\n`.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use crate::indexability::{IndexReport, PolicyMatrix};
use crate::sim::SimulationTrace;

/// `%.12g`: 12 significant digits, trailing zeros dropped, exponent form
/// outside `1e-4 ≤ |x| < 1e12`.
pub fn format_g12(x: f64) -> String {
    const P: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..P).contains(&exp) {
        let fixed = format!("{:.*}", (P - 1 - exp) as usize, x);
        strip_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Anything that renders as a CSV table.
pub trait ToCsv {
    fn csv_rows(&self) -> Vec<Vec<String>>;

    fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        write_rows(&mut out, &self.csv_rows()).expect("writing to memory");
        String::from_utf8(out).expect("CSV output is UTF-8")
    }
}

fn write_rows<W: Write>(sink: W, rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .flexible(true)
        .from_writer(sink);
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()
}

/// Header `state,λ₁,…,λ_J`, then one row per state: `s,Φ(s,1),…,Φ(s,J)`.
impl ToCsv for PolicyMatrix {
    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::with_capacity(self.num_states() + 1);
        let mut header = vec!["state".to_string()];
        header.extend(self.grid().points().iter().map(|&l| format_g12(l)));
        rows.push(header);
        for (s, acts) in self.actions().iter().enumerate() {
            let mut row = vec![(s + 1).to_string()];
            row.extend(acts.iter().map(|a| a.to_string()));
            rows.push(row);
        }
        rows
    }
}

/// `state,index,flags`. A non-indexable report lists its witnesses instead:
/// `state,lambda1,lambda2,lambda3`.
impl ToCsv for IndexReport {
    fn csv_rows(&self) -> Vec<Vec<String>> {
        if self.indexable {
            let mut rows = vec![vec!["state".into(), "index".into(), "flags".into()]];
            for (s, idx) in self.whittle_index.iter().enumerate() {
                rows.push(vec![
                    (s + 1).to_string(),
                    format_g12(idx.value),
                    idx.flag.as_str().to_string(),
                ]);
            }
            rows
        } else {
            let mut rows = vec![vec![
                "state".into(),
                "lambda1".into(),
                "lambda2".into(),
                "lambda3".into(),
            ]];
            for w in &self.witnesses {
                let mut row = vec![w.state.to_string()];
                row.extend(w.lambdas.iter().map(|&l| format_g12(l)));
                rows.push(row);
            }
            rows
        }
    }
}

/// `t,mean,stderr`, with `t` counting steps from 0.
impl ToCsv for SimulationTrace {
    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![vec!["t".into(), "mean".into(), "stderr".into()]];
        for (t, (m, se)) in self
            .per_step_mean_discounted_cumulative
            .iter()
            .zip(&self.per_step_std_error)
            .enumerate()
        {
            rows.push(vec![t.to_string(), format_g12(*m), format_g12(*se)]);
        }
        rows
    }
}

pub fn write_csv<T: ToCsv + ?Sized>(item: &T, destination: &Path) -> io::Result<()> {
    let file = File::create(destination)?;
    write_rows(io::BufWriter::new(file), &item.csv_rows())
}
