//! Artifact emission: comma-separated tables with mandatory header rows
//! and a plain-text run manifest. Artifact file names carry the config
//! hash, and the manifest lists every artifact written.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use triphase_core::coupling::ConstantsReport;
use triphase_core::diagnostics::{ContinuityTable, EnergyTable, HolderTable, TraceGapTable};
use triphase_core::solver::SolverReport;
use triphase_core::variational::HeatBalanceRow;

/// Deterministic float formatting: full round-trip precision, fixed layout.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.17e}")
    }
}

pub struct ArtifactSet {
    dir: PathBuf,
    prefix: String,
    hash: String,
    pub written: Vec<PathBuf>,
}

impl ArtifactSet {
    pub fn new(dir: &Path, prefix: &str, hash: &str) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactSet {
            dir: dir.to_path_buf(),
            prefix: prefix.to_string(),
            hash: hash.to_string(),
            written: Vec::new(),
        })
    }

    fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir
            .join(format!("{}_{}_{}.{ext}", self.prefix, stem, self.hash))
    }

    pub fn write_text(&mut self, stem: &str, ext: &str, body: &str) -> io::Result<PathBuf> {
        let path = self.path(stem, ext);
        fs::write(&path, body)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_csv(
        &mut self,
        stem: &str,
        header: &str,
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> io::Result<PathBuf> {
        let mut body = String::new();
        body.push_str(header);
        body.push_str("\r\n");
        for row in rows {
            body.push_str(&row.join(","));
            body.push_str("\r\n");
        }
        self.write_text(stem, "csv", &body)
    }

    pub fn energy_csv(&mut self, table: &EnergyTable) -> io::Result<PathBuf> {
        let first_balance = table.rows.first().map(|r| r.balance()).unwrap_or(0.0);
        self.write_csv(
            "energy",
            "t,bulk_a_sq,bulk_b_sq,surf_sq_weighted,diss_rate_a,diss_rate_b,diss_rate_s,diss_integral,balance,defect_vs_start",
            table.rows.iter().map(|r| {
                vec![
                    fmt_f64(r.t),
                    fmt_f64(r.bulk_a_sq),
                    fmt_f64(r.bulk_b_sq),
                    fmt_f64(r.surf_sq),
                    fmt_f64(r.diss_a),
                    fmt_f64(r.diss_b),
                    fmt_f64(r.diss_s),
                    fmt_f64(r.diss_integral),
                    fmt_f64(r.balance()),
                    fmt_f64(r.balance() - first_balance),
                ]
            }),
        )
    }

    pub fn solver_csv(&mut self, report: &SolverReport) -> io::Result<PathBuf> {
        self.write_csv(
            "solver",
            "window,iteration,increment,ratio,iterate_norm,apriori_slack",
            report.csv_rows().into_iter().map(|(w, m, inc, r, n, s)| {
                vec![
                    w.to_string(),
                    m.to_string(),
                    fmt_f64(inc),
                    fmt_f64(r),
                    fmt_f64(n),
                    fmt_f64(s),
                ]
            }),
        )
    }

    pub fn continuity_csv(&mut self, table: &ContinuityTable) -> io::Result<PathBuf> {
        self.write_csv(
            "continuity",
            "t,diff_a,diff_b,diff_s,diff_total",
            table.rows.iter().map(|r| {
                vec![
                    fmt_f64(r.t),
                    fmt_f64(r.diff_a),
                    fmt_f64(r.diff_b),
                    fmt_f64(r.diff_s),
                    fmt_f64(r.diff_total),
                ]
            }),
        )
    }

    pub fn trace_csv(&mut self, table: &TraceGapTable) -> io::Result<PathBuf> {
        self.write_csv(
            "trace",
            "t,gap_representation,gap_measured",
            table.rows.iter().map(|r| {
                vec![fmt_f64(r.t), fmt_f64(r.gap_repr), fmt_f64(r.gap_extrap)]
            }),
        )
    }

    pub fn heat_balance_csv(&mut self, rows: &[HeatBalanceRow]) -> io::Result<PathBuf> {
        self.write_csv(
            "heat_balance",
            "t,residual_a,residual_b,residual_s,carrier_defect",
            rows.iter().map(|r| {
                vec![
                    fmt_f64(r.t),
                    fmt_f64(r.res_a),
                    fmt_f64(r.res_b),
                    fmt_f64(r.res_s),
                    fmt_f64(r.carrier_defect),
                ]
            }),
        )
    }

    pub fn holder_csv(&mut self, table: &HolderTable) -> io::Result<PathBuf> {
        self.write_csv(
            "holder",
            "t1,t2,quotient",
            table
                .rows
                .iter()
                .map(|r| vec![fmt_f64(r.t1), fmt_f64(r.t2), fmt_f64(r.quotient)]),
        )
    }

    pub fn constants_text(&mut self, report: &ConstantsReport) -> io::Result<PathBuf> {
        let mut body = String::new();
        for (k, v) in report.to_key_values() {
            let _ = writeln!(body, "{k} = {v}");
        }
        self.write_text("constants", "txt", &body)
    }

    /// Run manifest: version, config echo, hash, seed, and artifact list.
    #[allow(clippy::too_many_arguments)]
    pub fn manifest(
        &mut self,
        config_raw: &str,
        seed: u64,
        extra: &[(String, String)],
    ) -> io::Result<PathBuf> {
        let mut body = String::new();
        let _ = writeln!(body, "triphase {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(body, "config_hash = {}", self.hash);
        let _ = writeln!(body, "seed = {seed}");
        for (k, v) in extra {
            let _ = writeln!(body, "{k} = {v}");
        }
        let _ = writeln!(body, "artifacts:");
        for p in &self.written {
            let _ = writeln!(body, "  {}", p.display());
        }
        let _ = writeln!(body, "config:");
        for line in config_raw.lines() {
            let _ = writeln!(body, "  {line}");
        }
        self.write_text("manifest", "txt", &body)
    }
}
