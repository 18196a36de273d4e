use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const LEAD_NAMES: [&str; 8] = ["I", "II", "V1", "V2", "V3", "V4", "V5", "V6"];
pub const ECG_HEADER: &str = "t_ms,I,II,V1,V2,V3,V4,V5,V6";

/// The eight independent leads sampled every `dt_ms`.
#[derive(Clone, Debug, PartialEq)]
pub struct EcgTrace {
    pub dt_ms: f64,
    pub leads: [Vec<f64>; 8],
}

impl EcgTrace {
    pub fn new(dt_ms: f64, leads: [Vec<f64>; 8]) -> Result<Self> {
        if !(dt_ms > 0.0) {
            return Err(Error::Config(format!("sample period must be positive, got {dt_ms}")));
        }
        let n = leads[0].len();
        if let Some(l) = leads.iter().find(|l| l.len() != n) {
            return Err(Error::Size {
                context: "ECG lead length",
                expected: n,
                got: l.len(),
            });
        }
        if leads.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { layer: "ECG trace" });
        }
        Ok(EcgTrace { dt_ms, leads })
    }

    pub fn len(&self) -> usize {
        self.leads[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lead(&self, name: &str) -> Option<&[f64]> {
        LEAD_NAMES.iter().position(|&n| n == name).map(|i| self.leads[i].as_slice())
    }

    fn combine(&self, a: f64, b: f64) -> Vec<f64> {
        self.leads[0].iter().zip(&self.leads[1]).map(|(i, ii)| a * i + b * ii).collect()
    }

    /// III = II - I.
    pub fn iii(&self) -> Vec<f64> {
        self.leads[1].iter().zip(&self.leads[0]).map(|(ii, i)| ii - i).collect()
    }

    /// aVR = -(I + II) / 2.
    pub fn avr(&self) -> Vec<f64> {
        self.leads[0].iter().zip(&self.leads[1]).map(|(i, ii)| -(i + ii) / 2.0).collect()
    }

    /// aVL = I - II / 2.
    pub fn avl(&self) -> Vec<f64> {
        self.combine(1.0, -0.5)
    }

    /// aVF = II - I / 2.
    pub fn avf(&self) -> Vec<f64> {
        self.combine(-0.5, 1.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(ECG_HEADER);
        s.push('\n');
        for i in 0..self.len() {
            let _ = write!(s, "{}", i as f64 * self.dt_ms);
            for l in &self.leads {
                let _ = write!(s, ",{}", l[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str, path: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == ECG_HEADER => {}
            _ => return Err(Error::parse(path, 1, format!("expected header '{ECG_HEADER}'"))),
        }
        let mut t = Vec::new();
        let mut leads: [Vec<f64>; 8] = Default::default();
        for (ln, line) in lines {
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, ln + 1, "expected numbers"))?;
            if vals.len() != 9 {
                return Err(Error::parse(path, ln + 1, format!("expected 9 columns, got {}", vals.len())));
            }
            t.push(vals[0]);
            for (l, &v) in leads.iter_mut().zip(&vals[1..]) {
                l.push(v);
            }
        }
        let dt = if t.len() >= 2 { t[1] - t[0] } else { 1.0 };
        EcgTrace::new(dt, leads).map_err(|e| Error::parse(path, 0, e.to_string()))
    }
}

/// Builds the eight leads from potentials at LA, RA, LL, V1..V6 (in that
/// order). Chest leads are referenced to Wilson's central terminal.
pub fn derive_leads(pots: &[Vec<f64>], dt_ms: f64) -> Result<EcgTrace> {
    if pots.len() != 9 {
        return Err(Error::Size {
            context: "ECG potential channels",
            expected: 9,
            got: pots.len(),
        });
    }
    let n = pots[0].len();
    if let Some(p) = pots.iter().find(|p| p.len() != n) {
        return Err(Error::Size {
            context: "ECG channel length",
            expected: n,
            got: p.len(),
        });
    }
    let (la, ra, ll) = (&pots[0], &pots[1], &pots[2]);
    let wct: Vec<f64> = (0..n).map(|i| (ra[i] + la[i] + ll[i]) / 3.0).collect();
    let mut leads: [Vec<f64>; 8] = Default::default();
    leads[0] = (0..n).map(|i| la[i] - ra[i]).collect();
    leads[1] = (0..n).map(|i| ll[i] - ra[i]).collect();
    for c in 0..6 {
        leads[2 + c] = (0..n).map(|i| pots[3 + c][i] - wct[i]).collect();
    }
    EcgTrace::new(dt_ms, leads)
}
