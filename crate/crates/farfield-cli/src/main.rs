//! `farfield` — config-driven runs of the lattice far-field toolkit.
//!
//! Exit codes: 0 success, 2 config error, 3 inadmissible or degenerate
//! input, 4 numerical failure.

mod config;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use config::Config;
use farfield::models::{LatticeModel, ModelKind};
use farfield::numeric::{rat_to_f64, C64};
use farfield::reduction::{self, allowed_region, enumerate_admissible, solve_scales};
use farfield::simulate::{
    demodulate, make_initial, run_full, validate_far_field, window_for, DemodOptions,
    FarFieldConfig, PacketSpec, Profile,
};
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "farfield", version, about = "multiscale reduction of nonlinear lattice equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory (overrides output.dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// model kind (overrides model.kind): mkdv | hietarinta | vkvm | nikdv
    #[arg(long)]
    model: Option<String>,
    /// rational cos k (overrides carrier.cos_k)
    #[arg(long)]
    cos_k: Option<String>,
    /// integer scale M2 (overrides scales.m2)
    #[arg(long)]
    m2: Option<i64>,
    /// lattice ratio N (overrides packet.n)
    #[arg(long)]
    n: Option<i64>,
    /// model parameters as rational strings (override model.*)
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    e1: Option<String>,
    #[arg(long)]
    e2: Option<String>,
    #[arg(long)]
    o1: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// dispersion relation sweep: CSV of (k, omega, group velocity, |Omega|)
    Dispersion(Common),
    /// admissible carriers and the allowed-region boundary curves
    Admissible(Common),
    /// reduced-equation coefficients at one carrier (JSON report)
    Coefficients(Common),
    /// run the expansion engine; optionally verify the closed forms
    Derive(Common),
    /// build a packet, evolve the lattice, export envelope snapshots
    Simulate(Common),
    /// far-field convergence experiment over an epsilon list
    Validate(Common),
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            classify_exit(&e)
        }
    };
    std::process::exit(code);
}

fn classify_exit(e: &anyhow::Error) -> i32 {
    if let Some(fe) = e.downcast_ref::<farfield::Error>() {
        return match fe {
            farfield::Error::Domain(_) => 2,
            farfield::Error::Inadmissible(_) | farfield::Error::Degenerate(_) => 3,
            farfield::Error::Singular { .. }
            | farfield::Error::Numerical(_)
            | farfield::Error::Undetermined(_)
            | farfield::Error::Io(_) => 4,
        };
    }
    2
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(out) = &common.out {
        cfg.output.dir = out.display().to_string();
    }
    if let Some(m) = &common.model {
        cfg.model.kind = m.clone();
    }
    if let Some(ck) = &common.cos_k {
        cfg.carrier.cos_k = ck.clone();
    }
    if let Some(m2) = common.m2 {
        cfg.scales.m2 = m2;
    }
    if let Some(n) = common.n {
        cfg.packet.n = n;
    }
    for (flag, slot) in [
        (&common.p, &mut cfg.model.p),
        (&common.q, &mut cfg.model.q),
        (&common.e1, &mut cfg.model.e1),
        (&common.e2, &mut cfg.model.e2),
        (&common.o1, &mut cfg.model.o1),
        (&common.alpha, &mut cfg.model.alpha),
        (&common.beta, &mut cfg.model.beta),
    ] {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    Ok(cfg)
}

fn out_dir(cfg: &Config) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write_manifest(cfg: &Config, dir: &Path, sub: &str) -> Result<()> {
    std::fs::write(dir.join("manifest.toml"), cfg.manifest(sub)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dispersion(c) => dispersion_cmd(&load_config(&c)?),
        Command::Admissible(c) => admissible_cmd(&load_config(&c)?),
        Command::Coefficients(c) => coefficients_cmd(&load_config(&c)?),
        Command::Derive(c) => derive_cmd(&load_config(&c)?),
        Command::Simulate(c) => simulate_cmd(&load_config(&c)?),
        Command::Validate(c) => validate_cmd(&load_config(&c)?),
    }
}

fn dispersion_cmd(cfg: &Config) -> Result<()> {
    let model = cfg.build_model()?;
    // flag degenerate dispersion ratios (for example mkdv with p = q, where
    // P = p - q = 0): the sweep itself is fine but no carrier is admissible
    if let Ok((p, q)) = model.pq_exact() {
        use num::traits::Zero;
        if p.is_zero() || (&p * &p - &q * &q).is_zero() {
            eprintln!(
                "warning: degenerate dispersion ratio (P = 0 or P² = Q²): no admissible carriers for reduction"
            );
        }
    }
    let dir = out_dir(cfg)?;
    let d = &cfg.dispersion;
    if d.steps < 2 || d.k_max <= d.k_min {
        anyhow::bail!("bad dispersion grid");
    }
    let ks: Vec<f64> = (0..d.steps)
        .map(|i| d.k_min + (d.k_max - d.k_min) * i as f64 / (d.steps - 1) as f64)
        .collect();
    let rows = model.dispersion_sweep(&ks);
    let mut f = std::fs::File::create(dir.join("dispersion.csv"))?;
    writeln!(f, "# farfield-dispersion-csv v1")?;
    writeln!(f, "k,omega,group_velocity,abs_omega,reality_ok")?;
    for (k, r) in ks.iter().zip(rows) {
        match r {
            Ok(cw) => writeln!(
                f,
                "{},{},{},{},1",
                k, cw.omega, cw.group_velocity, cw.big_omega.norm()
            )?,
            // reality violations are reported per row, not fatal
            Err(_) => writeln!(f, "{k},,,0,0")?,
        }
    }
    write_manifest(cfg, &dir, "dispersion")?;
    println!("wrote {}", dir.join("dispersion.csv").display());
    Ok(())
}

fn admissible_cmd(cfg: &Config) -> Result<()> {
    let model = cfg.build_model()?;
    let dir = out_dir(cfg)?;
    let a = &cfg.admissible;
    let pts = enumerate_admissible(&model, a.m2_max, a.cosk_denominator_max)?;
    let mut f = std::fs::File::create(dir.join("admissible.csv"))?;
    writeln!(f, "# farfield-admissible-csv v1")?;
    writeln!(f, "cos_k,m1,m2,ratio")?;
    for p in &pts {
        writeln!(f, "{},{},{},{}", p.cos_k, p.m1, p.m2, p.m2 as f64 / p.m1 as f64)?;
    }
    // allowed-region boundary curves over an r grid
    let mut g = std::fs::File::create(dir.join("regions.csv"))?;
    writeln!(g, "# farfield-regions-csv v1")?;
    writeln!(g, "r,lo,hi,degenerate")?;
    for i in 0..a.region_steps {
        let r = a.region_r_min
            + (a.region_r_max - a.region_r_min) * i as f64 / (a.region_steps.max(2) - 1) as f64;
        let rr = farfield::numeric::Rat::from_float(r)
            .ok_or_else(|| anyhow::anyhow!("bad region grid value"))?;
        match allowed_region(&rr) {
            Ok(reg) => writeln!(
                g,
                "{},{},{},{}",
                r,
                rat_to_f64(&reg.lo),
                rat_to_f64(&reg.hi),
                u8::from(reg.degenerate)
            )?,
            Err(_) => writeln!(g, "{r},,,1")?,
        }
    }
    write_manifest(cfg, &dir, "admissible")?;
    println!(
        "wrote {} ({} admissible carriers)",
        dir.join("admissible.csv").display(),
        pts.len()
    );
    Ok(())
}

fn cjson(v: C64) -> serde_json::Value {
    json!({ "re": v.re, "im": v.im })
}

fn coefficients_cmd(cfg: &Config) -> Result<()> {
    let model = cfg.build_model()?;
    let cos_k = cfg.build_cos_k()?;
    let dir = out_dir(cfg)?;
    let red = reduction::reduce(&model, &cos_k, cfg.scales.m2)?;
    let scales = red.scales.as_ref();
    let report = json!({
        "schema": "farfield-coefficients v1",
        "model": model.kind().to_string(),
        "params": cfg.model,
        "cos_k": cfg.carrier.cos_k,
        "sin_sign": cfg.carrier.sin_sign,
        "m1": red.m1,
        "m2": red.m2,
        "s": scales.map(|s| cjson(s.s)),
        "rho": scales.map(|s| s.rho),
        "theta": scales.map(|s| s.theta),
        "c1": cjson(red.c1),
        "c2": cjson(red.c2),
        "cubic": cjson(red.cubic),
        "nonlocal": red.nonlocal.as_ref().map(|nl| json!({
            "coupling": cjson(nl.coupling),
            "p2": cjson(nl.p2),
        })),
        "p1": cjson(red.p1),
        "C1": cjson(red.big_c1),
        "C2": cjson(red.big_c2),
        "C3": cjson(red.big_c3),
        "continuum_coeff": cjson(red.continuum_coeff),
        "group_velocity": red.carrier.group_velocity,
        "omega": red.carrier.omega,
    });
    std::fs::write(dir.join("coefficients.json"), serde_json::to_string_pretty(&report)?)?;
    write_manifest(cfg, &dir, "coefficients")?;
    println!("wrote {}", dir.join("coefficients.json").display());
    Ok(())
}

fn derive_cmd(cfg: &Config) -> Result<()> {
    let model = cfg.build_model()?;
    let dir = out_dir(cfg)?;
    let mut report = json!({
        "schema": "farfield-derive v1",
        "model": model.kind().to_string(),
    });
    if model.kind() == ModelKind::Nikdv {
        let cos_k = cfg.build_cos_k()?;
        let params = match &model {
            LatticeModel::Nikdv(p) => p.clone(),
            _ => unreachable!(),
        };
        let red = reduction::reduce_nikdv(&params, cos_k.k(), None)?;
        report["reduced"] = json!({
            "c_first_neighbor": cjson(red.c2),
            "cubic": cjson(red.cubic),
            "p1": cjson(red.p1),
            "p2": red.nonlocal.as_ref().map(|nl| cjson(nl.p2)),
            "m1_real": red.m1,
            "m2_real": red.m2,
        });
    } else if cfg.derive.verify {
        let rep = farfield::engine::verify_closed_forms(model.kind(), cfg.derive.samples, cfg.derive.seed)?;
        println!(
            "engine vs closed forms: {} points, max relative deviation {:.3e}",
            rep.points, rep.max_rel_dev
        );
        report["verify"] = json!({
            "points": rep.points,
            "seed": cfg.derive.seed,
            "max_rel_dev": rep.max_rel_dev,
            "per_coeff": rep.per_coeff.iter().map(|(k, v)| json!({"coeff": k, "dev": v})).collect::<Vec<_>>(),
        });
    }
    // export the determining equations at the configured carrier
    let cos_k = cfg.build_cos_k()?;
    let carrier = model.dispersion(cos_k.k())?;
    let (m1f, m2f) = match model.kind() {
        ModelKind::Nikdv => {
            let alpha = match &model {
                LatticeModel::Nikdv(p) => rat_to_f64(&p.alpha),
                _ => unreachable!(),
            };
            (
                -2.0 * carrier.omega.cos(),
                -6.0 * alpha * carrier.k.cos() * carrier.k.sin().powi(2),
            )
        }
        _ => {
            let sc = solve_scales(&model, &cos_k, cfg.scales.m2, cfg.scales.branch)?;
            (sc.m1 as f64, sc.m2 as f64)
        }
    };
    let input = farfield::engine::EngineInput {
        z: carrier.z,
        big_omega: carrier.big_omega,
        m1: C64::new(m1f, 0.0),
        m2: C64::new(m2f, 0.0),
    };
    let exp = farfield::engine::expand(&model, &input, Default::default())?;
    report["determining_equations"] = farfield::engine::export_equations(&exp);
    std::fs::write(dir.join("derive.json"), serde_json::to_string_pretty(&report)?)?;
    write_manifest(cfg, &dir, "derive")?;
    println!("wrote {}", dir.join("derive.json").display());
    Ok(())
}

fn build_packet(cfg: &Config, model: &LatticeModel) -> Result<PacketSpec> {
    let cos_k = cfg.build_cos_k()?;
    let scales = solve_scales(model, &cos_k, cfg.scales.m2, cfg.scales.branch)?;
    let carrier = model.dispersion(cos_k.k())?;
    let profile = match cfg.packet.profile.as_str() {
        "sech" => Profile::Sech,
        "gaussian" => Profile::Gaussian,
        other => anyhow::bail!("unknown packet profile '{other}'"),
    };
    Ok(PacketSpec {
        profile,
        amplitude: cfg.packet.amplitude,
        width: cfg.packet.width,
        n: cfg.packet.n,
        carrier,
        scales,
        harmonics: cfg.packet.harmonics,
    })
}

fn simulate_cmd(cfg: &Config) -> Result<()> {
    let model = cfg.build_model()?;
    let dir = out_dir(cfg)?;
    let packet = build_packet(cfg, &model)?;
    let m_steps = cfg.simulate.slow_time * (packet.n * packet.n) as usize;
    let window = window_for(&model, &packet, m_steps);
    let init = make_initial(&model, &packet, window)?;
    let (grid, stats) = run_full(&model, &init, m_steps)?;
    let mut opts = DemodOptions::default();
    let need = (packet.slow_extent() + 64.0).ceil() as usize;
    if opts.grid_half < need {
        opts.grid_half = need.next_multiple_of(64);
    }
    for t in 0..=cfg.simulate.slow_time {
        let m = t * (packet.n * packet.n) as usize;
        let env = demodulate(&grid, &packet, init.background, m, 1, &opts)?;
        let mut f = std::fs::File::create(dir.join(format!("envelope_t{t}.csv")))?;
        writeln!(f, "# farfield-envelope-csv v1")?;
        writeln!(f, "n2,re,im,abs")?;
        for (i, v) in env.values.iter().enumerate() {
            writeln!(f, "{},{},{},{}", env.n2_lo + i as i64, v.re, v.im, v.norm())?;
        }
    }
    if cfg.simulate.write_grid {
        let mut f = std::fs::File::create(dir.join("grid.bin"))?;
        grid.write_binary(&mut f)?;
        let mut f = std::fs::File::create(dir.join("grid.csv"))?;
        grid.write_csv(&mut f)?;
    }
    write_manifest(cfg, &dir, "simulate")?;
    println!(
        "simulated {} rows x {} columns (min quad denominator {:.3e})",
        m_steps + 1,
        grid.width,
        stats.min_denominator
    );
    Ok(())
}

fn validate_cmd(cfg: &Config) -> Result<()> {
    let model = cfg.build_model()?;
    let dir = out_dir(cfg)?;
    let v = &cfg.validate;
    let ff = FarFieldConfig {
        cos_k: cfg.build_cos_k()?,
        m2: cfg.scales.m2,
        n_list: v.n_list.clone(),
        slow_time: v.slow_time,
        amplitude: v.amplitude,
        width_per_n: v.width_per_n,
        width_fixed: v.width_fixed,
        harmonics: cfg.packet.harmonics,
        demod: DemodOptions::default(),
        second_harmonic_rows: v.second_harmonic_rows,
    };
    let report = validate_far_field(&model, &ff)?;
    let mut f = std::fs::File::create(dir.join("validation.csv"))?;
    farfield::simulate::write_validation_csv(&report, &mut f)?;
    for r in &report.rows {
        println!(
            "N = {}: E = {:.4}{}{}",
            r.n,
            r.envelope_error,
            r.ratio_vs_prev
                .map(|x| format!(", ratio vs prev = {x:.2}"))
                .unwrap_or_default(),
            r.second_harmonic_ratio
                .map(|x| format!(", 2k-law ratio = {x:.3}"))
                .unwrap_or_default(),
        );
    }
    write_manifest(cfg, &dir, "validate")?;
    println!("wrote {}", dir.join("validation.csv").display());
    Ok(())
}
