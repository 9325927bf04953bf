//! CSV readers and writers for the input data families.
//!
//! Every file is comma-separated with a header row and ISO-8601 dates (see
//! `docs/data-formats.md`). Readers reject rather than impute, and errors
//! carry the 1-based line number with the header on line 1. Writers emit the
//! canonical layout, so parsing a written file gives back an equal object.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Days, Months};
use pansim_core::collateral::{EconSeries, Quarter, QuarterlyNpis};
use pansim_core::data::{
    AgeStructure, NpiSchedule, ReffEstimates, SourceBracket, TargetSeries, VaccinationSupply, WeatherSeries, AGE_GROUPS,
};
use pansim_core::features::{DEFAULT_DROP, DEFAULT_KEEP};
use pansim_core::{Date, Matrix};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const NPIS_FILE: &str = "npis.csv";
pub const WEATHER_FILE: &str = "weather.csv";
pub const REFF_FILE: &str = "reff.csv";
pub const AGE_FILE: &str = "age_structure.csv";
pub const VACCINATION_FILE: &str = "vaccination.csv";
pub const TARGETS_FILE: &str = "targets.csv";
pub const ECON_FILE: &str = "econ.csv";

const REQUIRED_FILES: [&str; 6] = [NPIS_FILE, WEATHER_FILE, REFF_FILE, AGE_FILE, VACCINATION_FILE, TARGETS_FILE];

/// OxGRT indicators that are neither forced in nor forced out by the default
/// feature policy.
const OXGRT_OTHER: [&str; 6] = [
    "Public information campaigns",
    "Vaccination policy",
    "Protection of elderly people",
    "International support",
    "Emergency investment in healthcare",
    "Investment in vaccines",
];

/// NPI columns the NPI reader accepts: the OxGRT indicators plus `extra`.
pub fn known_npis(extra: &[String]) -> BTreeSet<String> {
    DEFAULT_KEEP
        .iter()
        .chain(&DEFAULT_DROP)
        .chain(&OXGRT_OTHER)
        .map(|s| s.to_string())
        .chain(extra.iter().cloned())
        .collect()
}

struct Table {
    file: &'static str,
    headers: Vec<String>,
    // (line, cells)
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table<R: Read>(reader: R, file: &'static str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        Error::parse(file, line, e.to_string())
    };
    let headers: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(Error::data(file, "no data rows"));
    }
    Ok(Table { file, headers, rows })
}

impl Table {
    fn expect_headers(&self, fixed: &[&str]) -> Result<()> {
        let ok = self.headers.len() >= fixed.len() && self.headers.iter().zip(fixed).all(|(h, f)| h == f);
        if !ok {
            return Err(Error::parse(
                self.file,
                1,
                format!("header must start with {}, got {}", fixed.join(","), self.headers.join(",")),
            ));
        }
        Ok(())
    }

    fn expect_exact_headers(&self, fixed: &[&str]) -> Result<()> {
        self.expect_headers(fixed)?;
        if self.headers.len() != fixed.len() {
            return Err(Error::parse(self.file, 1, format!("header must be exactly {}", fixed.join(","))));
        }
        Ok(())
    }

    fn number(&self, line: u64, column: &str, cell: &str) -> Result<f64> {
        if cell.is_empty() {
            return Err(Error::parse(self.file, line, format!("missing value in column '{column}'")));
        }
        let v: f64 = cell
            .parse()
            .map_err(|_| Error::parse(self.file, line, format!("invalid number '{cell}' in column '{column}'")))?;
        if !v.is_finite() {
            return Err(Error::parse(self.file, line, format!("non-finite value '{cell}' in column '{column}'")));
        }
        Ok(v)
    }

    fn non_negative(&self, line: u64, column: &str, cell: &str) -> Result<f64> {
        let v = self.number(line, column, cell)?;
        if v < 0.0 {
            return Err(Error::parse(self.file, line, format!("negative value {v} in column '{column}'")));
        }
        Ok(v)
    }

    fn date(&self, line: u64, cell: &str) -> Result<Date> {
        Date::parse_from_str(cell, "%Y-%m-%d")
            .map_err(|_| Error::parse(self.file, line, format!("malformed date '{cell}' (expected YYYY-MM-DD)")))
    }

    /// Dates of the first column, required to step by exactly one day.
    fn daily_index(&self) -> Result<Vec<Date>> {
        let mut dates: Vec<Date> = Vec::with_capacity(self.rows.len());
        for (line, cells) in &self.rows {
            let d = self.date(*line, &cells[0])?;
            if let Some(&prev) = dates.last() {
                let expected = prev + Days::new(1);
                if d == prev {
                    return Err(Error::parse(self.file, *line, format!("duplicate date {d}")));
                }
                if d < prev {
                    return Err(Error::parse(self.file, *line, format!("date {d} is out of order (follows {prev})")));
                }
                if d != expected {
                    return Err(Error::parse(
                        self.file,
                        *line,
                        format!("missing date {expected} (gap between {prev} and {d})"),
                    ));
                }
            }
            dates.push(d);
        }
        Ok(dates)
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> std::io::Result<()> {
    w.flush()
}

fn io_err(file: &str) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::data(file, e.to_string())
}

/// Daily NPI schedule plus the header columns that were not recognised.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedNpis {
    pub schedule: NpiSchedule,
    pub skipped: Vec<String>,
}

/// `date,<npi>,...` with non-negative integer levels. Columns outside `known`
/// are reported in `skipped` and ignored.
pub fn parse_npis<R: Read>(reader: R, known: &BTreeSet<String>) -> Result<ParsedNpis> {
    let t = read_table(reader, NPIS_FILE)?;
    t.expect_headers(&["date"])?;
    let mut names = Vec::new();
    let mut cols = Vec::new();
    let mut skipped = Vec::new();
    for (i, h) in t.headers.iter().enumerate().skip(1) {
        if !known.contains(h) {
            skipped.push(h.clone());
            continue;
        }
        if names.contains(h) {
            return Err(Error::parse(NPIS_FILE, 1, format!("duplicate NPI column '{h}'")));
        }
        names.push(h.clone());
        cols.push(i);
    }
    if names.is_empty() {
        return Err(Error::parse(
            NPIS_FILE,
            1,
            format!("no known NPI columns (unrecognised: {})", skipped.join(", ")),
        ));
    }
    let dates = t.daily_index()?;
    let mut levels = Matrix::zeros(t.rows.len(), names.len());
    for (r, (line, cells)) in t.rows.iter().enumerate() {
        for (c, &src) in cols.iter().enumerate() {
            let v = t.non_negative(*line, &t.headers[src], &cells[src])?;
            if v.fract() != 0.0 {
                return Err(Error::parse(
                    NPIS_FILE,
                    *line,
                    format!("level {v} of '{}' is not an integer", t.headers[src]),
                ));
            }
            levels.set(r, c, v);
        }
    }
    Ok(ParsedNpis {
        schedule: NpiSchedule::new(dates[0], names, levels)?,
        skipped,
    })
}

pub fn write_npis<W: Write>(w: W, s: &NpiSchedule) -> Result<()> {
    let mut out = writer(w);
    let e = io_err(NPIS_FILE);
    let mut header = vec!["date".to_string()];
    header.extend(s.npi_names().iter().cloned());
    out.write_record(&header).map_err(&e)?;
    for d in 0..s.days() {
        let mut rec = vec![s.date_at(d).to_string()];
        rec.extend(s.levels().row(d).iter().map(f64::to_string));
        out.write_record(&rec).map_err(&e)?;
    }
    finish(out).map_err(|x| Error::data(NPIS_FILE, x.to_string()))
}

struct Unit {
    suffix: &'static str,
    to_canonical: fn(f64) -> f64,
}

/// Unit suffixes converted on read; unsuffixed columns are taken to be in
/// canonical units already (°C, mm, hours, %).
const UNITS: [Unit; 5] = [
    Unit {
        suffix: "_degF",
        to_canonical: |f| (f - 32.0) * 5.0 / 9.0,
    },
    Unit {
        suffix: "_K",
        to_canonical: |k| k - 273.15,
    },
    Unit {
        suffix: "_in",
        to_canonical: |x| x * 25.4,
    },
    Unit {
        suffix: "_cm",
        to_canonical: |x| x * 10.0,
    },
    Unit {
        suffix: "_min",
        to_canonical: |x| x / 60.0,
    },
];

fn normalise_column(header: &str) -> (String, Option<fn(f64) -> f64>) {
    for u in &UNITS {
        if let Some(base) = header.strip_suffix(u.suffix) {
            if !base.is_empty() {
                return (base.to_string(), Some(u.to_canonical));
            }
        }
    }
    (header.to_string(), None)
}

fn month_start(t: &Table, line: u64, cell: &str) -> Result<Date> {
    Date::parse_from_str(&format!("{cell}-01"), "%Y-%m-%d")
        .map_err(|_| Error::parse(t.file, line, format!("malformed month '{cell}' (expected YYYY-MM)")))
}

/// `month,<variable>,...` with `month` as `YYYY-MM`, one row per month.
pub fn parse_weather<R: Read>(reader: R) -> Result<WeatherSeries> {
    let t = read_table(reader, WEATHER_FILE)?;
    t.expect_headers(&["month"])?;
    if t.headers.len() < 2 {
        return Err(Error::parse(WEATHER_FILE, 1, "no weather variables"));
    }
    let mut names = Vec::new();
    let mut convert = Vec::new();
    for h in &t.headers[1..] {
        let (name, f) = normalise_column(h);
        if names.contains(&name) {
            return Err(Error::parse(WEATHER_FILE, 1, format!("duplicate weather variable '{name}'")));
        }
        names.push(name);
        convert.push(f);
    }
    let mut values = Matrix::zeros(t.rows.len(), names.len());
    let mut start = None;
    let mut prev: Option<Date> = None;
    for (r, (line, cells)) in t.rows.iter().enumerate() {
        let m = month_start(&t, *line, &cells[0])?;
        if let Some(p) = prev {
            let expected = p + Months::new(1);
            if m <= p {
                return Err(Error::parse(WEATHER_FILE, *line, format!("month {} is duplicated or out of order", cells[0])));
            }
            if m != expected {
                return Err(Error::parse(
                    WEATHER_FILE,
                    *line,
                    format!("missing month {}", expected.format("%Y-%m")),
                ));
            }
        }
        start.get_or_insert(m);
        prev = Some(m);
        for (c, f) in convert.iter().enumerate() {
            let v = t.number(*line, &t.headers[c + 1], &cells[c + 1])?;
            values.set(r, c, f.map_or(v, |f| f(v)));
        }
    }
    Ok(WeatherSeries::new(start.expect("at least one row"), names, values)?)
}

pub fn write_weather<W: Write>(w: W, s: &WeatherSeries) -> Result<()> {
    let mut out = writer(w);
    let e = io_err(WEATHER_FILE);
    let mut header = vec!["month".to_string()];
    header.extend(s.variables().iter().cloned());
    out.write_record(&header).map_err(&e)?;
    for i in 0..s.months() {
        let mut rec = vec![s.month_at(i).format("%Y-%m").to_string()];
        rec.extend(s.values().row(i).iter().map(f64::to_string));
        out.write_record(&rec).map_err(&e)?;
    }
    finish(out).map_err(|x| Error::data(WEATHER_FILE, x.to_string()))
}

/// `date,lower,mean,upper`, daily, `0 ≤ lower ≤ mean ≤ upper`.
pub fn parse_reff<R: Read>(reader: R) -> Result<ReffEstimates> {
    let t = read_table(reader, REFF_FILE)?;
    t.expect_exact_headers(&["date", "lower", "mean", "upper"])?;
    let dates = t.daily_index()?;
    let (mut lower, mut mean, mut upper) = (Vec::new(), Vec::new(), Vec::new());
    for (line, cells) in &t.rows {
        let l = t.non_negative(*line, "lower", &cells[1])?;
        let m = t.non_negative(*line, "mean", &cells[2])?;
        let u = t.non_negative(*line, "upper", &cells[3])?;
        if !(l <= m && m <= u) {
            return Err(Error::parse(
                REFF_FILE,
                *line,
                format!("bands out of order: need lower <= mean <= upper, got {l}, {m}, {u}"),
            ));
        }
        lower.push(l);
        mean.push(m);
        upper.push(u);
    }
    Ok(ReffEstimates::new(dates[0], lower, mean, upper)?)
}

pub fn write_reff<W: Write>(w: W, r: &ReffEstimates) -> Result<()> {
    use pansim_core::data::Band;
    let mut out = writer(w);
    let e = io_err(REFF_FILE);
    out.write_record(["date", "lower", "mean", "upper"]).map_err(&e)?;
    for i in 0..r.len() {
        let d = r.start_date() + Days::new(i as u64);
        out.write_record([
            d.to_string(),
            r.band(Band::Lower)[i].to_string(),
            r.band(Band::Mean)[i].to_string(),
            r.band(Band::Upper)[i].to_string(),
        ])
        .map_err(&e)?;
    }
    finish(out).map_err(|x| Error::data(REFF_FILE, x.to_string()))
}

/// `age_from,age_to,population,ifr,hosp_rate,icu_rate` in any bracketing;
/// an empty `age_to` marks the open-ended oldest bracket. Brackets are mapped
/// onto the 18 canonical 5-year groups.
pub fn parse_age_structure<R: Read>(reader: R) -> Result<AgeStructure> {
    let t = read_table(reader, AGE_FILE)?;
    t.expect_exact_headers(&["age_from", "age_to", "population", "ifr", "hosp_rate", "icu_rate"])?;
    let mut brackets = Vec::with_capacity(t.rows.len());
    for (line, cells) in &t.rows {
        let age = |col: &str, cell: &str| -> Result<u32> {
            cell.parse()
                .map_err(|_| Error::parse(AGE_FILE, *line, format!("invalid age '{cell}' in column '{col}'")))
        };
        let from = age("age_from", &cells[0])?;
        let to = if cells[1].is_empty() { None } else { Some(age("age_to", &cells[1])?) };
        let population = t.non_negative(*line, "population", &cells[2])?;
        let mut rates = [0.0; 3];
        for (k, col) in ["ifr", "hosp_rate", "icu_rate"].into_iter().enumerate() {
            let v = t.number(*line, col, &cells[3 + k])?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::parse(AGE_FILE, *line, format!("{col} {v} is not a probability in [0, 1]")));
            }
            rates[k] = v;
        }
        brackets.push(SourceBracket {
            from,
            to,
            population,
            ifr: rates[0],
            hosp_rate: rates[1],
            icu_rate: rates[2],
        });
    }
    AgeStructure::homogenize(&brackets).map_err(|e| Error::data(AGE_FILE, e.to_string()))
}

/// Writes the 18 canonical brackets.
pub fn write_age_structure<W: Write>(w: W, a: &AgeStructure) -> Result<()> {
    let mut out = writer(w);
    let e = io_err(AGE_FILE);
    out.write_record(["age_from", "age_to", "population", "ifr", "hosp_rate", "icu_rate"])
        .map_err(&e)?;
    for g in 0..AGE_GROUPS {
        let to = if g + 1 == AGE_GROUPS { String::new() } else { (5 * g + 4).to_string() };
        out.write_record([
            (5 * g).to_string(),
            to,
            a.population[g].to_string(),
            a.ifr[g].to_string(),
            a.hosp_rate[g].to_string(),
            a.icu_rate[g].to_string(),
        ])
        .map_err(&e)?;
    }
    finish(out).map_err(|x| Error::data(AGE_FILE, x.to_string()))
}

/// `date,cumulative_doses`, dates strictly increasing (need not be daily).
pub fn parse_vaccination<R: Read>(reader: R) -> Result<VaccinationSupply> {
    let t = read_table(reader, VACCINATION_FILE)?;
    t.expect_exact_headers(&["date", "cumulative_doses"])?;
    let mut obs: Vec<(Date, f64)> = Vec::with_capacity(t.rows.len());
    for (line, cells) in &t.rows {
        let d = t.date(*line, &cells[0])?;
        let v = t.non_negative(*line, "cumulative_doses", &cells[1])?;
        if let Some(&(pd, pv)) = obs.last() {
            if d <= pd {
                return Err(Error::parse(VACCINATION_FILE, *line, format!("date {d} is duplicated or out of order")));
            }
            if v < pv {
                return Err(Error::parse(
                    VACCINATION_FILE,
                    *line,
                    format!("cumulative doses decrease from {pv} to {v}"),
                ));
            }
        }
        obs.push((d, v));
    }
    Ok(VaccinationSupply::new(obs)?)
}

pub fn write_vaccination<W: Write>(w: W, v: &VaccinationSupply) -> Result<()> {
    let mut out = writer(w);
    let e = io_err(VACCINATION_FILE);
    out.write_record(["date", "cumulative_doses"]).map_err(&e)?;
    for (d, c) in v.observations() {
        out.write_record([d.to_string(), c.to_string()]).map_err(&e)?;
    }
    finish(out).map_err(|x| Error::data(VACCINATION_FILE, x.to_string()))
}

const TARGET_COLUMNS: [&str; 5] = ["date", "infected", "fatal", "hospital_beds", "icu"];

/// `date,infected,fatal,hospital_beds,icu`, daily, non-negative.
pub fn parse_targets<R: Read>(reader: R) -> Result<TargetSeries> {
    let t = read_table(reader, TARGETS_FILE)?;
    t.expect_exact_headers(&TARGET_COLUMNS)?;
    let dates = t.daily_index()?;
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (line, cells) in &t.rows {
        for (k, col) in cols.iter_mut().enumerate() {
            col.push(t.non_negative(*line, TARGET_COLUMNS[k + 1], &cells[k + 1])?);
        }
    }
    let [infected, fatal, beds, icu] = cols;
    Ok(TargetSeries::new(dates[0], infected, fatal, beds, icu)?)
}

pub fn write_targets<W: Write>(w: W, t: &TargetSeries) -> Result<()> {
    use pansim_core::data::Target;
    let mut out = writer(w);
    let e = io_err(TARGETS_FILE);
    out.write_record(TARGET_COLUMNS).map_err(&e)?;
    for i in 0..t.len() {
        let mut rec = vec![(t.start_date() + Days::new(i as u64)).to_string()];
        rec.extend(Target::ALL.iter().map(|&k| t.get(k)[i].to_string()));
        out.write_record(&rec).map_err(&e)?;
    }
    finish(out).map_err(|x| Error::data(TARGETS_FILE, x.to_string()))
}

/// Quarterly economic series, optionally with the quarters' mean NPI levels.
#[derive(Debug, Clone, PartialEq)]
pub struct EconData {
    pub econ: EconSeries,
    /// Present when the file carries NPI columns; otherwise the daily schedule
    /// is aggregated instead.
    pub npis: Option<QuarterlyNpis>,
}

/// `quarter,gdp,lyl[,<npi>...]` with consecutive `YYYYQn` quarters.
pub fn parse_econ<R: Read>(reader: R) -> Result<EconData> {
    let t = read_table(reader, ECON_FILE)?;
    t.expect_headers(&["quarter", "gdp", "lyl"])?;
    let npi_names: Vec<String> = t.headers[3..].to_vec();
    let mut periods: Vec<Quarter> = Vec::new();
    let (mut gdp, mut lyl) = (Vec::new(), Vec::new());
    let mut levels = Matrix::zeros(t.rows.len(), npi_names.len());
    for (r, (line, cells)) in t.rows.iter().enumerate() {
        let q = Quarter::parse(&cells[0])
            .ok_or_else(|| Error::parse(ECON_FILE, *line, format!("malformed quarter '{}' (expected YYYYQn)", cells[0])))?;
        if let Some(&p) = periods.last() {
            if q != p.next() {
                return Err(Error::parse(ECON_FILE, *line, format!("expected quarter {} after {p}, got {q}", p.next())));
            }
        }
        periods.push(q);
        let g = t.number(*line, "gdp", &cells[1])?;
        if g <= 0.0 {
            return Err(Error::parse(ECON_FILE, *line, format!("gdp must be > 0, got {g}")));
        }
        gdp.push(g);
        lyl.push(t.non_negative(*line, "lyl", &cells[2])?);
        for c in 0..npi_names.len() {
            levels.set(r, c, t.non_negative(*line, &npi_names[c], &cells[3 + c])?);
        }
    }
    let npis = (!npi_names.is_empty()).then(|| QuarterlyNpis {
        npi_names,
        periods: periods.clone(),
        levels,
    });
    Ok(EconData {
        econ: EconSeries::new(periods, gdp, lyl)?,
        npis,
    })
}

pub fn write_econ<W: Write>(w: W, data: &EconData) -> Result<()> {
    let mut out = writer(w);
    let e = io_err(ECON_FILE);
    let mut header = vec!["quarter".to_string(), "gdp".into(), "lyl".into()];
    if let Some(n) = &data.npis {
        header.extend(n.npi_names.iter().cloned());
    }
    out.write_record(&header).map_err(&e)?;
    for (i, q) in data.econ.periods().iter().enumerate() {
        let mut rec = vec![q.to_string(), data.econ.gdp()[i].to_string(), data.econ.lyl()[i].to_string()];
        if let Some(n) = &data.npis {
            rec.extend(n.levels.row(i).iter().map(f64::to_string));
        }
        out.write_record(&rec).map_err(&e)?;
    }
    finish(out).map_err(|x| Error::data(ECON_FILE, x.to_string()))
}

/// Every input family of a data directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub npis: NpiSchedule,
    pub weather: WeatherSeries,
    pub reff: ReffEstimates,
    pub age: AgeStructure,
    pub vaccination: VaccinationSupply,
    pub targets: TargetSeries,
    pub econ: Option<EconData>,
    /// Unrecognised NPI columns that were dropped.
    pub skipped_npis: Vec<String>,
}

fn open(dir: &Path, name: &str) -> Result<fs::File> {
    let p = dir.join(name);
    fs::File::open(&p).map_err(|e| Error::io(p, e))
}

/// Reads every file of `dir`; `econ.csv` is optional.
pub fn load_dir(dir: &Path, known: &BTreeSet<String>) -> Result<Dataset> {
    let npis = parse_npis(open(dir, NPIS_FILE)?, known)?;
    let econ = if dir.join(ECON_FILE).exists() {
        Some(parse_econ(open(dir, ECON_FILE)?)?)
    } else {
        None
    };
    Ok(Dataset {
        npis: npis.schedule,
        weather: parse_weather(open(dir, WEATHER_FILE)?)?,
        reff: parse_reff(open(dir, REFF_FILE)?)?,
        age: parse_age_structure(open(dir, AGE_FILE)?)?,
        vaccination: parse_vaccination(open(dir, VACCINATION_FILE)?)?,
        targets: parse_targets(open(dir, TARGETS_FILE)?)?,
        econ,
        skipped_npis: npis.skipped,
    })
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    let p = dir.join(name);
    fs::File::create(&p).map_err(|e| Error::io(p, e))
}

/// Writes every family in canonical form.
pub fn write_dir(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_npis(create(dir, NPIS_FILE)?, &ds.npis)?;
    write_weather(create(dir, WEATHER_FILE)?, &ds.weather)?;
    write_reff(create(dir, REFF_FILE)?, &ds.reff)?;
    write_age_structure(create(dir, AGE_FILE)?, &ds.age)?;
    write_vaccination(create(dir, VACCINATION_FILE)?, &ds.vaccination)?;
    write_targets(create(dir, TARGETS_FILE)?, &ds.targets)?;
    if let Some(e) = &ds.econ {
        write_econ(create(dir, ECON_FILE)?, e)?;
    }
    Ok(())
}

/// SHA-256 over the names and bytes of the data files present in `dir`.
pub fn data_hash(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in REQUIRED_FILES.iter().chain(&[ECON_FILE]) {
        let p = dir.join(name);
        if !p.exists() {
            continue;
        }
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// One line per file for `pansim ingest`.
pub fn describe(ds: &Dataset) -> Vec<String> {
    let mut out = vec![
        format!(
            "{NPIS_FILE}: {} days {}..={}, NPIs: {}",
            ds.npis.days(),
            ds.npis.start_date(),
            ds.npis.end_date(),
            ds.npis.npi_names().join(", ")
        ),
        format!(
            "{WEATHER_FILE}: {} months from {}, variables: {}",
            ds.weather.months(),
            ds.weather.start_month().format("%Y-%m"),
            ds.weather.variables().join(", ")
        ),
        format!("{REFF_FILE}: {} days {}..={}", ds.reff.len(), ds.reff.start_date(), ds.reff.end_date()),
        format!("{AGE_FILE}: {AGE_GROUPS} groups, population {:.0}", ds.age.total_population()),
        format!(
            "{VACCINATION_FILE}: {} observations, {:.1} doses/day",
            ds.vaccination.observations().len(),
            ds.vaccination.daily_rate().unwrap_or(0.0)
        ),
        format!(
            "{TARGETS_FILE}: {} days {}..={}",
            ds.targets.len(),
            ds.targets.start_date(),
            ds.targets.end_date()
        ),
    ];
    match &ds.econ {
        Some(e) => out.push(format!(
            "{ECON_FILE}: {} quarters{}",
            e.econ.periods().len(),
            if e.npis.is_some() { " with NPI columns" } else { "" }
        )),
        None => out.push(format!("{ECON_FILE}: absent (collateral model unavailable)")),
    }
    if !ds.skipped_npis.is_empty() {
        out.push(format!("skipped unknown NPI columns: {}", ds.skipped_npis.join(", ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known() -> BTreeSet<String> {
        known_npis(&[])
    }

    fn d(y: i32, m: u32, day: u32) -> Date {
        Date::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn minimal_npi_schedule() {
        let text = "date,Workplace closing,Facial coverings\n2020-03-01,0,1\n2020-03-02,2,1\n2020-03-03,3,2\n";
        let p = parse_npis(text.as_bytes(), &known()).unwrap();
        assert_eq!(p.schedule.start_date(), d(2020, 3, 1));
        assert_eq!(p.schedule.levels().rows(), 3);
        assert_eq!(p.schedule.levels().cols(), 2);
        assert!(p.skipped.is_empty());
    }

    #[test]
    fn empty_stream_has_no_data_rows() {
        for text in ["", "date,Workplace closing\n"] {
            let err = parse_npis(text.as_bytes(), &known()).unwrap_err();
            assert!(err.to_string().contains("no data rows"), "{err}");
        }
    }

    #[test]
    fn gap_names_the_missing_date() {
        let text = "date,Workplace closing\n2020-03-01,1\n2020-03-03,1\n";
        let err = parse_npis(text.as_bytes(), &known()).unwrap_err().to_string();
        assert!(err.contains("missing date 2020-03-02"), "{err}");
        assert!(err.starts_with("npis.csv:3:"), "{err}");
    }

    #[test]
    fn npi_row_errors_carry_lines() {
        let cases = [
            ("date,Workplace closing\n2020-03-01,1\n2020-3-x,1\n", "npis.csv:3: malformed date"),
            ("date,Workplace closing\n2020-03-01,1.5\n", "npis.csv:2: level 1.5"),
            ("date,Workplace closing\n2020-03-01,1\n2020-03-01,1\n", "npis.csv:3: duplicate date"),
            ("date,Workplace closing\n2020-03-01,-1\n", "npis.csv:2: negative value"),
        ];
        for (text, want) in cases {
            let err = parse_npis(text.as_bytes(), &known()).unwrap_err().to_string();
            assert!(err.starts_with(want), "{err} vs {want}");
        }
    }

    #[test]
    fn unknown_npi_columns_are_skipped() {
        let text = "date,Workplace closing,E4_International support_x\n2020-03-01,1,9\n";
        let p = parse_npis(text.as_bytes(), &known()).unwrap();
        assert_eq!(p.schedule.npi_names(), ["Workplace closing".to_string()]);
        assert_eq!(p.skipped, vec!["E4_International support_x".to_string()]);
    }

    #[test]
    fn weather_examples() {
        let mut text = String::from("month,temperature\n");
        for m in 1..=12 {
            text.push_str(&format!("2019-{m:02},{}\n", m as f64 * 1.5));
        }
        let w = parse_weather(text.as_bytes()).unwrap();
        assert_eq!((w.months(), w.variables().len()), (12, 1));

        let err = parse_weather("month,temperature,sunshine\n2019-01,,3\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert_eq!(err, "weather.csv:2: missing value in column 'temperature'");

        let err = parse_weather("month,t\n2019-01,1\n2019-03,2\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("missing month 2019-02"), "{err}");
    }

    #[test]
    fn weather_units_are_normalised() {
        let w = parse_weather("month,temperature_degF,rain_in,sunshine_min\n2019-01,212,2,90\n".as_bytes()).unwrap();
        assert_eq!(w.variables(), ["temperature", "rain", "sunshine"]);
        assert_eq!(w.values().row(0), [100.0, 50.8, 1.5]);
    }

    #[test]
    fn reff_examples() {
        assert!(parse_reff("date,lower,mean,upper\n2020-03-01,0.8,0.9,1.0\n".as_bytes()).is_ok());
        let err = parse_reff("date,lower,mean,upper\n2020-03-01,1.1,0.9,1.0\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("reff.csv:2: bands out of order"), "{err}");
    }

    #[test]
    fn age_brackets_split_proportionally() {
        let mut text = String::from("age_from,age_to,population,ifr,hosp_rate,icu_rate\n0,9,100,0,0.01,0\n10,19,200,0,0.01,0\n");
        text.push_str("20,,1000,0.01,0.05,0.01\n");
        let a = parse_age_structure(text.as_bytes()).unwrap();
        assert_eq!(a.population[0], 50.0);
        assert_eq!(a.population[1], 50.0);
        assert_eq!(a.population[2], 100.0);
        assert_eq!(a.total_population(), 1300.0);

        let err = parse_age_structure("age_from,age_to,population,ifr,hosp_rate,icu_rate\n0,,10,1.5,0,0\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("age_structure.csv:2: ifr 1.5"), "{err}");
    }

    #[test]
    fn vaccination_must_not_decrease() {
        let err = parse_vaccination("date,cumulative_doses\n2021-01-01,10\n2021-01-08,5\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("vaccination.csv:3:"), "{err}");
    }

    #[test]
    fn econ_with_and_without_npi_columns() {
        let e = parse_econ("quarter,gdp,lyl\n2019Q4,100,3000\n2020Q1,98,3100\n".as_bytes()).unwrap();
        assert!(e.npis.is_none());
        let e = parse_econ("quarter,gdp,lyl,Workplace closing\n2019Q4,100,3000,0\n2020Q1,98,3100,1.5\n".as_bytes()).unwrap();
        assert_eq!(e.npis.unwrap().levels.get(1, 0), 1.5);
        let err = parse_econ("quarter,gdp,lyl\n2019Q4,100,3000\n2020Q2,98,3100\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.contains("expected quarter 2020Q1"), "{err}");
    }
}
