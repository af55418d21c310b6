//! Dataset CSV exchange format.
//!
//! Header: `id,eligible,part,conditions,treatment,x1..xk,y,ice`. `eligible`,
//! `conditions`, `treatment` and `ice` are `1`/`0`, `part` is `A`/`B`, and
//! `y` is empty when outcomes have not been generated. Reals are written with
//! 17 significant digits.

use std::io::{Read, Write};
use std::path::Path;

use crate::cell::{Conditions, Eligibility, Treatment};
use crate::design::{Part, PatientRecord, TrialDataset};
use crate::error::{Error, Result};

const FIXED: [&str; 5] = ["id", "eligible", "part", "conditions", "treatment"];

/// 17 significant digits, `%.17g` style with trailing zeros removed.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    h.extend((1..=k).map(|j| format!("x{j}")));
    h.push("y".into());
    h.push("ice".into());
    h
}

pub fn write_csv<W: Write>(data: &TrialDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = data.n_covariates();
    w.write_record(header(k)).map_err(csv_err)?;
    for p in data.patients() {
        let mut row = Vec::with_capacity(k + 7);
        row.push(p.id.to_string());
        row.push(p.eligibility.indicator().to_string());
        row.push(match p.part {
            Part::A => "A".into(),
            Part::B => "B".into(),
        });
        row.push(p.conditions.indicator().to_string());
        row.push(p.treatment.indicator().to_string());
        row.extend(p.covariates.iter().map(|x| format_f64(*x)));
        row.push(p.outcome.map(format_f64).unwrap_or_default());
        row.push(if p.ice_occurred { "1" } else { "0" }.into());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(data: &TrialDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(data, std::io::BufWriter::new(file))
}

pub fn to_csv_string(data: &TrialDataset) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(data, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Data {
            row: Some(pos.line() as usize),
            column: None,
            message: e.to_string(),
        },
        None => Error::data(e.to_string()),
    }
}

fn flag(row: usize, column: &str, v: &str) -> Result<bool> {
    match v {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(Error::data_at(row, column, format!("expected 1 or 0, got `{v}`"))),
    }
}

fn real(row: usize, column: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::data_at(row, column, format!("expected a real number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(Error::data_at(row, column, format!("value `{v}` is not finite")));
    }
    Ok(x)
}

/// Parse a dataset. Rows are numbered from 1 for the first data row.
pub fn read_csv<R: Read>(input: R) -> Result<TrialDataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let head: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if head.len() < FIXED.len() + 2 {
        return Err(Error::data(format!("header has {} columns; expected {}", head.len(), header(0).join(","))));
    }
    let k = head.len() - FIXED.len() - 2;
    let expected = header(k);
    if let Some((got, want)) = head.iter().zip(&expected).find(|(a, b)| a != b) {
        return Err(Error::Data {
            row: None,
            column: Some(want.clone()),
            message: format!("header column `{got}` should be `{want}`"),
        });
    }

    let mut patients = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(csv_err)?;
        if rec.len() != expected.len() {
            return Err(Error::Data {
                row: Some(row),
                column: None,
                message: format!("{} fields, expected {}", rec.len(), expected.len()),
            });
        }
        let id: u64 = rec[0]
            .parse()
            .map_err(|_| Error::data_at(row, "id", format!("expected a non-negative integer, got `{}`", &rec[0])))?;
        if !seen.insert(id) {
            return Err(Error::data_at(row, "id", format!("duplicate id {id}")));
        }
        let eligibility = if flag(row, "eligible", &rec[1])? {
            Eligibility::Eligible
        } else {
            Eligibility::Broader
        };
        let part = match &rec[2] {
            "A" => Part::A,
            "B" => Part::B,
            v => return Err(Error::data_at(row, "part", format!("expected A or B, got `{v}`"))),
        };
        let conditions = if flag(row, "conditions", &rec[3])? {
            Conditions::Rct
        } else {
            Conditions::Crw
        };
        let treatment = if flag(row, "treatment", &rec[4])? {
            Treatment::Experimental
        } else {
            Treatment::Control
        };
        let covariates = (0..k)
            .map(|j| real(row, &expected[5 + j], &rec[5 + j]))
            .collect::<Result<Vec<_>>>()?;
        let y = &rec[5 + k];
        let outcome = if y.is_empty() { None } else { Some(real(row, "y", y)?) };
        let ice_occurred = flag(row, "ice", &rec[6 + k])?;
        let patient = PatientRecord {
            id,
            eligibility,
            part,
            conditions,
            treatment,
            covariates,
            outcome,
            ice_occurred,
        };
        if let Err(m) = patient.check_structure() {
            let column = if part == Part::A && eligibility == Eligibility::Broader {
                "part"
            } else {
                "conditions"
            };
            return Err(Error::data_at(row, column, m));
        }
        patients.push(patient);
    }
    TrialDataset::new(patients, None)
}

pub fn read_csv_file(path: &Path) -> Result<TrialDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}
