//! `tmop` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime or parse error, 3 remesh
//! trigger fired.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tmop::field::DiscreteField;
use tmop::io::{export_vtk, read_config, read_field, read_mesh, write_field, write_mesh, write_report, RunConfig, RunReport};
use tmop::mesh::{perturb_interior, uniform_refine, Mesh};
use tmop::scenarios::{build_scenario, deform_sequence, ScenarioSpec, SCENARIO_NAMES};
use tmop::solver::optimize;
use tmop::targets::{make_target_builder, TargetBuilder};
use tmop::trigger::{check_trigger, metric_statistics};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_TRIGGER: u8 = 3;

#[derive(Parser)]
#[command(name = "tmop", version, about = "Target-matrix optimization of high-order quad/hex meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize node positions; the first --field is the target indicator.
    Optimize {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "field")]
        fields: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON run report.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Legacy VTK of the optimized mesh.
        #[arg(long)]
        vtk: Option<PathBuf>,
    },
    /// Print min/mean/max of every configured metric and the minimum det A.
    Quality {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "field")]
        fields: Vec<PathBuf>,
    },
    /// Check the admissible-Jacobian remesh trigger; exits 3 if it fires.
    Trigger {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "field")]
        fields: Vec<PathBuf>,
    },
    /// Write a built-in scenario: mesh, fields and config.
    Demo {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(SCENARIO_NAMES))]
        name: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        refinements: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Split every element into 2^d elements of the same degree.
    Refine {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomly displace interior nodes by up to `amplitude` local spacings.
    Perturb {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        amplitude: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a mesh and nodal fields as legacy ASCII VTK.
    ExportVtk {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long = "field")]
        fields: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn field_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "field".into())
}

fn load_fields(paths: &[PathBuf], mesh: &Mesh) -> Result<Vec<(String, DiscreteField)>> {
    paths
        .iter()
        .map(|p| Ok((field_name(p), read_field(p, mesh)?)))
        .collect()
}

fn named(fields: &[(String, DiscreteField)]) -> Vec<(&str, &DiscreteField)> {
    fields.iter().map(|(n, f)| (n.as_str(), f)).collect()
}

struct Setup {
    mesh: Mesh,
    config: RunConfig,
    fields: Vec<(String, DiscreteField)>,
}

fn setup(mesh: &Path, config: &Path, fields: &[PathBuf]) -> Result<Setup> {
    let mesh = read_mesh(mesh)?;
    let config = read_config(config)?;
    let fields = load_fields(fields, &mesh)?;
    Ok(Setup { mesh, config, fields })
}

impl Setup {
    fn builder(&self, quad: &tmop::mesh::QuadratureRule) -> Result<Box<dyn TargetBuilder>> {
        let indicator = self.fields.first().map(|(_, f)| f);
        Ok(make_target_builder(self.config.target, &self.mesh, indicator, self.config.alpha, quad)?)
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Optimize {
            mesh,
            config,
            fields,
            out,
            report,
            vtk,
        } => {
            let s = setup(&mesh, &config, &fields)?;
            let objective = s.config.objective_config(&s.mesh)?;
            let quad = objective.quadrature(&s.mesh);
            let builder = s.builder(&quad)?;
            let start = Instant::now();
            let (optimized, solver) = optimize(&s.mesh, builder.as_ref(), &objective, &s.config.solver_params())?;
            let trigger = match s.config.admissible_spec()? {
                Some(spec) => Some(check_trigger(&optimized, &builder.build(&optimized, &quad)?, &spec, &quad)?),
                None => None,
            };
            let wall = start.elapsed().as_secs_f64();
            write_mesh(&optimized, &out)?;
            println!(
                "F {:.6e} -> {:.6e} (metric {:.6e}, limiting {:.6e}) in {} iterations: {:?}",
                solver.initial.total,
                solver.final_value.total,
                solver.final_value.metric_sum(),
                solver.final_value.limiting_part,
                solver.iterations,
                solver.termination
            );
            println!("max displacement {:.6e}, min det A {:.6e}", solver.max_displacement, solver.final_min_det_a);
            let run_report = RunReport::new(&s.config, solver, trigger, wall);
            if let Some(t) = &run_report.trigger {
                println!("trigger fires: {} (worst ratio {:.6e})", t.fires, t.worst_ratio);
            }
            if let Some(path) = report {
                write_report(&run_report, &path)?;
            }
            if let Some(path) = vtk {
                export_vtk(&optimized, &named(&s.fields), &path)?;
            }
            Ok(0)
        }
        Command::Quality { mesh, config, fields } => {
            let s = setup(&mesh, &config, &fields)?;
            let quad = s.config.objective_config(&s.mesh)?.quadrature(&s.mesh);
            let targets = s.builder(&quad)?.build(&s.mesh, &quad)?;
            for &m in &s.config.metrics {
                let st = metric_statistics(&s.mesh, &targets, m, &quad)?;
                println!("{m}: min {:.6e} mean {:.6e} max {:.6e} infeasible points {}", st.min, st.mean, st.max, st.infeasible_points);
            }
            println!("min det A: {:.6e}", s.mesh.min_det_jacobian(&quad));
            Ok(0)
        }
        Command::Trigger { mesh, config, fields } => {
            let s = setup(&mesh, &config, &fields)?;
            let Some(spec) = s.config.admissible_spec()? else {
                bail!("{}: config has no trigger.S / trigger.metric", config.display());
            };
            let quad = s.config.objective_config(&s.mesh)?.quadrature(&s.mesh);
            let targets = s.builder(&quad)?.build(&s.mesh, &quad)?;
            let r = check_trigger(&s.mesh, &targets, &spec, &quad)?;
            let at = s.mesh.map_point(r.worst_element, quad.point(r.worst_point));
            let at: Vec<String> = at[..s.mesh.dim()].iter().map(|v| format!("{v:.6}")).collect();
            println!("fires: {}", if r.fires { "yes" } else { "no" });
            println!("worst_ratio: {:.6e}", r.worst_ratio);
            println!("location: element {} point {} at ({})", r.worst_element, r.worst_point, at.join(", "));
            Ok(if r.fires { EXIT_TRIGGER } else { 0 })
        }
        Command::Demo {
            name,
            out_dir,
            refinements,
            seed,
        } => {
            let sc = build_scenario(&ScenarioSpec::new(&name).refinements(refinements).seed(seed))?;
            fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
            let mut written = Vec::new();
            let mesh_path = out_dir.join("mesh.homesh");
            write_mesh(&sc.mesh0, &mesh_path)?;
            written.push(mesh_path);
            for f in &sc.fields {
                let p = out_dir.join(format!("{}.hofield", f.name));
                write_field(&f.field, &p)?;
                written.push(p);
            }
            let delta_file = sc.field("delta").map(|_| "delta.hofield");
            let cfg = RunConfig::from_scenario(&sc, delta_file)?;
            let cfg_path = out_dir.join("config.cfg");
            fs::write(&cfg_path, cfg.to_text()).with_context(|| format!("cannot write {}", cfg_path.display()))?;
            written.push(cfg_path);
            if name == "deform-sequence" {
                for (i, (_, m)) in deform_sequence(&sc.mesh0)?.iter().enumerate() {
                    let p = out_dir.join(format!("step_{i:02}.homesh"));
                    write_mesh(m, &p)?;
                    written.push(p);
                }
            }
            for p in &written {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Refine { mesh, out } => {
            write_mesh(&uniform_refine(&read_mesh(&mesh)?), &out)?;
            Ok(0)
        }
        Command::Perturb {
            mesh,
            amplitude,
            seed,
            out,
        } => {
            write_mesh(&perturb_interior(&read_mesh(&mesh)?, amplitude, seed)?, &out)?;
            Ok(0)
        }
        Command::ExportVtk { mesh, fields, out } => {
            let mesh = read_mesh(&mesh)?;
            let fields = load_fields(&fields, &mesh)?;
            export_vtk(&mesh, &named(&fields), &out)?;
            Ok(0)
        }
    }
}
