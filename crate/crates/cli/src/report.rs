use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use anyhow::Result;
use pvyield::estimate::Scenario;
use pvyield::tables::AnnualRow;

const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

/// Plain-text summary: specific annual yield per scenario with its filter,
/// annual energy per scenario against the fixed-yield baseline, and
/// monthly shares.
pub fn render(annual: &[AnnualRow], shares: &[(i32, u8, [f64; 12])]) -> Result<String> {
    let years: BTreeSet<i32> = annual.iter().map(|r| r.year).collect();
    let scenarios: BTreeSet<u8> = annual.iter().map(|r| r.scenario).collect();
    let by_key: BTreeMap<(u8, i32), &AnnualRow> =
        annual.iter().map(|r| ((r.scenario, r.year), r)).collect();
    let cell = |s: u8, y: i32, f: &dyn Fn(&AnnualRow) -> String| {
        by_key.get(&(s, y)).map_or_else(|| "-".to_string(), |r| f(r))
    };
    let mut out = String::new();

    writeln!(out, "Specific annual yield (kWh/kWp, 1 sigma)")?;
    write!(out, "{:>3}  {:<10} {:<10} {:<10}", "Sc", "phi", "theta", "epsilon")?;
    for y in &years {
        write!(out, " {:>20}", y)?;
    }
    writeln!(out)?;
    for &s in &scenarios {
        let sc = Scenario::new(s)?;
        write!(
            out,
            "{:>3}  {:<10} {:<10} {:<10}",
            s,
            sc.describe_azimuth(),
            sc.describe_tilt(),
            sc.describe_epsilon()
        )?;
        for &y in &years {
            let v = cell(s, y, &|r| format!("{:.1} +/- {:.2}", r.specific, r.sigma_specific));
            write!(out, " {v:>20}")?;
        }
        writeln!(out)?;
    }

    writeln!(out)?;
    writeln!(out, "Annual yield (GWh, 1 sigma)")?;
    write!(out, "{:>3}", "Sc")?;
    for y in &years {
        write!(out, " {:>22}", y)?;
    }
    writeln!(out)?;
    for &s in &scenarios {
        write!(out, "{s:>3}")?;
        for &y in &years {
            let v = cell(s, y, &|r| format!("{:.3} +/- {:.4}", r.energy_gwh, r.sigma_gwh));
            write!(out, " {v:>22}")?;
        }
        writeln!(out)?;
    }
    write!(out, "{:>3}", "SN")?;
    for &y in &years {
        let v = annual
            .iter()
            .find(|r| r.year == y)
            .map_or_else(|| "-".to_string(), |r| format!("{:.3}", r.baseline_sn_gwh));
        write!(out, " {v:>22}")?;
    }
    writeln!(out)?;

    writeln!(out)?;
    writeln!(out, "Monthly shares of total output (%)")?;
    write!(out, "{:>4} {:>3}", "Year", "Sc")?;
    for m in MONTHS {
        write!(out, " {m:>5}")?;
    }
    writeln!(out)?;
    for (y, s, v) in shares {
        write!(out, "{y:>4} {s:>3}")?;
        for share in v {
            write!(out, " {share:>5.1}")?;
        }
        writeln!(out)?;
    }
    Ok(out)
}
