use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vpweave::analysis::{self, Severity};
use vpweave::derivation::{self, DeriveError, DeriveOptions, Platform};
use vpweave::metrics;
use vpweave::variability::SPEC_FILE;

const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "vpweave", version, about = "Derive products from a product-line platform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive a product into an empty or new directory
    Derive {
        #[arg(long)]
        platform: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reject directives outside annotative variation points (default)
        #[arg(long, conflicts_with = "lenient")]
        strict: bool,
        /// Resolve every directive regardless of coverage
        #[arg(long)]
        lenient: bool,
        /// Omit the timestamp so repeated runs are byte-identical
        #[arg(long)]
        reproducible: bool,
    },
    /// Check a configuration against the feature model
    Validate {
        #[arg(long)]
        platform: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Count the valid configurations
    Count {
        #[arg(long)]
        platform: PathBuf,
    },
    /// Explain how one feature shaped a derived product
    Trace {
        #[arg(long)]
        platform: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        feature: String,
        #[arg(long)]
        lenient: bool,
    },
    /// Report size and automation metrics
    Metrics {
        #[arg(long)]
        platform: PathBuf,
        #[arg(long, value_enum, default_value_t = MetricsFormat::Text)]
        format: MetricsFormat,
    },
    /// Run the consistency checks
    Check {
        #[arg(long)]
        platform: PathBuf,
        #[arg(long, value_enum, default_value_t = CheckFormat::Text)]
        format: CheckFormat,
        /// Exit non-zero when any warning or error is reported
        #[arg(long)]
        deny_lints: bool,
    },
    /// Write the bundled Blog platform
    InitSample {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricsFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckFormat {
    Text,
    Machine,
}

struct Style {
    color: bool,
}

impl Style {
    fn detect() -> Self {
        Style {
            color: std::env::var_os("VPWEAVE_NO_COLOR").is_none() && std::io::stderr().is_terminal(),
        }
    }

    fn paint(&self, code: &str, s: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{s}\x1b[0m")
        } else {
            s.to_owned()
        }
    }

    fn error(&self, msg: impl std::fmt::Display) {
        eprintln!("{} {msg}", self.paint("1;31", "error:"));
    }

    fn warning(&self, msg: impl std::fmt::Display) {
        eprintln!("{} {msg}", self.paint("1;33", "warning:"));
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("off")).init();
    let style = Style::detect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    ExitCode::from(run(cli.command, &style))
}

fn fail(style: &Style, e: &DeriveError) -> u8 {
    style.error(e);
    e.exit_code() as u8
}

fn load(style: &Style, dir: &Path) -> Result<Platform, u8> {
    let p = Platform::load(dir).map_err(|e| fail(style, &e))?;
    log::debug!(
        "loaded {}: {} features, {} components, {} variation points",
        dir.display(),
        p.model.len(),
        p.manifest.components().len(),
        p.spec.variation_points().len()
    );
    for w in p.spec.warnings() {
        style.warning(w);
    }
    Ok(p)
}

fn run(cmd: Command, style: &Style) -> u8 {
    match run_inner(cmd, style) {
        Ok(code) | Err(code) => code,
    }
}

fn run_inner(cmd: Command, style: &Style) -> Result<u8, u8> {
    match cmd {
        Command::Derive {
            platform,
            config,
            out,
            lenient,
            reproducible,
            ..
        } => {
            let p = load(style, &platform)?;
            let cfg = p.load_configuration(&config).map_err(|e| fail(style, &e))?;
            let opts = DeriveOptions {
                strict: !lenient,
                reproducible,
            };
            let result = derivation::derive_product(&p, &cfg, &out, opts).map_err(|e| fail(style, &e))?;
            for d in &result.diagnostics {
                style.warning(d);
            }
            println!(
                "derived {} artifacts into {} ({} directives resolved)",
                result.trace.summary.artifacts_written,
                result.output_root.display(),
                result.trace.summary.directives_resolved
            );
            Ok(0)
        }
        Command::Validate { platform, config } => {
            let p = load(style, &platform)?;
            let cfg = p.load_configuration(&config).map_err(|e| fail(style, &e))?;
            let report = p.model.validate(&cfg);
            if report.is_valid() {
                println!("valid: {}", cfg.selected.iter().cloned().collect::<Vec<_>>().join(", "));
                Ok(0)
            } else {
                Err(fail(style, &DeriveError::InvalidConfiguration(report)))
            }
        }
        Command::Count { platform } => {
            let p = load(style, &platform)?;
            match p.model.count_products() {
                Ok(n) => {
                    println!("{n}");
                    Ok(0)
                }
                Err(e) => {
                    style.error(e);
                    Err(3)
                }
            }
        }
        Command::Trace {
            platform,
            config,
            feature,
            lenient,
        } => {
            let p = load(style, &platform)?;
            if !p.model.contains(&feature) {
                style.error(format!("unknown feature `{feature}`"));
                return Err(EXIT_USAGE);
            }
            let cfg = p.load_configuration(&config).map_err(|e| fail(style, &e))?;
            let opts = DeriveOptions {
                strict: !lenient,
                reproducible: true,
            };
            let product = derivation::derive_in_memory(&p, &cfg, opts).map_err(|e| fail(style, &e))?;
            let text = derivation::explain_trace(&product.trace, &feature).map_err(|e| {
                style.error(e);
                EXIT_USAGE
            })?;
            print!("{text}");
            Ok(0)
        }
        Command::Metrics { platform, format } => {
            let p = load(style, &platform)?;
            let m = metrics::compute_metrics(&p.model, &p.manifest, &p.spec, &p.delimiters);
            match format {
                MetricsFormat::Text => print!("{}", m.to_text()),
                MetricsFormat::Json => println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialise")),
            }
            Ok(0)
        }
        Command::Check {
            platform,
            format,
            deny_lints,
        } => {
            // variability.json is parsed leniently so its problems show up
            // as diagnostics instead of aborting the check
            let model_src = read(style, &platform.join(derivation::FEATURES_FILE))?;
            let model = vpweave::FeatureModel::parse(&model_src).map_err(|e| {
                style.error(format!("{}: {e}", derivation::FEATURES_FILE));
                3
            })?;
            let manifest = vpweave::base_model::BaseModelManifest::load_dir(&platform).map_err(|e| {
                style.error(format!("{}: {e}", vpweave::base_model::MANIFEST_FILE));
                3
            })?;
            let delimiters = vpweave::annotation::DelimiterTable::load_dir(&platform).map_err(|e| {
                style.error(format!("{}: {e}", vpweave::annotation::DELIMITERS_FILE));
                3
            })?;
            let spec_src = read(style, &platform.join(SPEC_FILE))?;
            let diags = analysis::check_platform(&model, &manifest, &spec_src, &delimiters);
            match format {
                CheckFormat::Text => {
                    print!("{}", analysis::render_text(&diags));
                    if diags.is_empty() {
                        println!("no problems found");
                    }
                }
                CheckFormat::Machine => {
                    println!("{}", serde_json::to_string_pretty(&diags).expect("diagnostics serialise"))
                }
            }
            let lints = diags.iter().filter(|d| d.severity >= Severity::Warning).count();
            if deny_lints && lints > 0 {
                style.error(format!("{lints} problem(s) reported"));
                return Err(1);
            }
            Ok(0)
        }
        Command::InitSample { out } => {
            if out.exists() && out.read_dir().map(|mut d| d.next().is_some()).unwrap_or(true) {
                style.error(format!("{} exists and is not empty", out.display()));
                return Err(1);
            }
            vpweave::sample::write_sample(&out).map_err(|e| {
                style.error(format!("{}: {e}", out.display()));
                1
            })?;
            println!("wrote sample platform to {}", out.display());
            Ok(0)
        }
    }
}

fn read(style: &Style, path: &Path) -> Result<String, u8> {
    std::fs::read_to_string(path).map_err(|e| {
        style.error(format!("cannot read {}: {e}", path.display()));
        3
    })
}
