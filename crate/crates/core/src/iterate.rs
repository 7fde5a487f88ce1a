//! Per-iteration solver records and their CSV form.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::mdp::Policy;

pub const CSV_HEADER: &str = "iter,v_mu,gap,eta";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterateRecord {
    pub iter: usize,
    pub v_mu: f64,
    /// `V*_mu - V_mu^{pi_k}` when a reference optimum was supplied.
    pub gap: Option<f64>,
    /// Step size used to leave this iterate; 0 on the last record.
    pub eta: f64,
    pub kl_to_reference: Option<f64>,
    pub max_abs_q: f64,
    /// Seconds spent producing this iterate. Never written to CSV.
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterateLog {
    pub records: Vec<IterateRecord>,
    /// Where the reference `V*_mu` came from, if any.
    pub reference: Option<String>,
}

impl IterateLog {
    pub fn last(&self) -> Option<&IterateRecord> {
        self.records.last()
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.last().and_then(|r| r.gap)
    }

    /// First iteration whose gap is below `tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.gap.is_some_and(|g| g < tol))
            .map(|r| r.iter)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let gap = r.gap.unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.iter,
                fmt_g17(r.v_mu),
                fmt_g17(gap),
                fmt_g17(r.eta)
            );
        }
        out
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Result of a solver run: the log and the last policy.
#[derive(Clone, Debug)]
pub struct SolverOutcome {
    pub log: IterateLog,
    pub policy: Policy,
}

/// Formats like C's `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    const P: i32 = 17;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // exponent after rounding to P significant digits
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        // reference strings from C printf("%.17g")
        let cases = [
            (0.1, "0.10000000000000001"),
            (1.0, "1"),
            (0.2, "0.20000000000000001"),
            (123456.0, "123456"),
            (1e-5, "1.0000000000000001e-05"),
            (1.5e-300, "1.5000000000000001e-300"),
            (-2.5, "-2.5"),
            (1e17, "1e+17"),
            (12345678901234567.0, "12345678901234568"),
            (0.0001, "0.0001"),
            (f64::NAN, "nan"),
            (0.0, "0"),
        ];
        for (x, expected) in cases {
            assert_eq!(fmt_g17(x), expected, "{x:e}");
        }
    }

    #[test]
    fn g17_round_trips() {
        for x in [std::f64::consts::PI, 1.0 / 3.0, 2.0f64.sqrt() * 1e-7, 6.02e23, -1e-300] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_layout() {
        let log = IterateLog {
            records: vec![
                IterateRecord {
                    iter: 0,
                    v_mu: 0.5,
                    gap: Some(0.25),
                    eta: 0.1,
                    kl_to_reference: None,
                    max_abs_q: 1.0,
                    wall_time: 3.0,
                },
                IterateRecord {
                    iter: 1,
                    v_mu: 0.75,
                    gap: None,
                    eta: 0.0,
                    kl_to_reference: None,
                    max_abs_q: 1.0,
                    wall_time: 4.0,
                },
            ],
            reference: None,
        };
        assert_eq!(
            log.to_csv(),
            "iter,v_mu,gap,eta\n0,0.5,0.25,0.10000000000000001\n1,0.75,nan,0\n"
        );
        assert_eq!(log.first_below(0.3), Some(0));
    }
}
