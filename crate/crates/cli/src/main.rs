//! `evcomp`: motion compensation, detection and tracking on event-camera streams.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};
use evcomp::config::KEYS;

#[derive(Debug, Parser)]
#[command(
    name = "evcomp",
    version,
    about = "Motion compensation and moving-object tracking for event cameras"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Estimate the background motion model of every slice.
    Compensate {
        #[command(flatten)]
        input: InputArgs,
        /// Write before/after time images per slice into this directory.
        #[arg(long, value_name = "DIR")]
        render: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Detect independently moving objects per slice, without tracking.
    Detect {
        #[command(flatten)]
        input: InputArgs,
        /// Write compensated count and time images with detection boxes into this directory.
        #[arg(long, value_name = "DIR")]
        render: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the full loop and write one record per live, matched track per slice.
    Track {
        #[command(flatten)]
        input: InputArgs,
        /// Write compensated count and time images with detection boxes into this directory.
        #[arg(long, value_name = "DIR")]
        render: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a synthetic event stream with ground-truth object boxes.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score detection or track records against ground truth.
    Eval {
        /// Ground-truth file; repeat together with --detections for several sequences.
        #[arg(long, required = true, value_name = "FILE")]
        gt: Vec<PathBuf>,
        /// Object records (or ground-truth style boxes) to score.
        #[arg(long, required = true, value_name = "FILE")]
        detections: Vec<PathBuf>,
        /// Overlap measure: coverage (intersection over labeled area) or iou.
        #[arg(long, default_value = "coverage")]
        measure: String,
        /// Minimum overlap counted as a success.
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
        /// Largest time difference between paired frames, seconds.
        #[arg(long, default_value_t = 1e-6)]
        time_tolerance: f64,
    },
    /// Write count (PGM) and time (PPM) images of every slice under a fixed model.
    Render {
        #[command(flatten)]
        input: InputArgs,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Warp as h_x,h_y,h_z,theta.
        #[arg(long, default_value = "0,0,0,0", allow_hyphen_values = true)]
        model: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Event file: `t x y p` per line, optional `# sensor W H` header.
    #[arg(short, long, value_name = "FILE")]
    input: PathBuf,
    /// Results file; standard output when omitted.
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Sensor width when the event file has no sensor header.
    #[arg(long)]
    width: Option<u32>,
    /// Sensor height when the event file has no sensor header.
    #[arg(long)]
    height: Option<u32>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Event file to write.
    #[arg(short, long, value_name = "FILE")]
    output: PathBuf,
    /// Ground-truth box file to write.
    #[arg(long, value_name = "FILE")]
    gt: Option<PathBuf>,
    #[arg(long, default_value_t = 240)]
    width: u32,
    #[arg(long, default_value_t = 180)]
    height: u32,
    /// Number of slices of duration `dt`.
    #[arg(long, default_value_t = 8)]
    slices: usize,
    #[arg(long, default_value_t = 1)]
    min_objects: usize,
    #[arg(long, default_value_t = 3)]
    max_objects: usize,
    /// Object speed relative to the background, in multiples of its size per slice.
    #[arg(long, default_value_t = 1.5)]
    min_speed: f64,
    #[arg(long, default_value_t = 2.0)]
    max_speed: f64,
    /// Object texture, edge points per square pixel.
    #[arg(long, default_value_t = 1.0)]
    texture: f64,
    /// Background translation range, pixels per slice.
    #[arg(long, default_value_t = 3.0)]
    shift: f64,
    /// Background expansion and rotation range per slice.
    #[arg(long, default_value_t = 0.02)]
    zoom: f64,
    /// Uniform noise events as a fraction of signal events.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

/// Config file plus one flag per config key; flags override the file.
#[derive(Debug, Default)]
struct ConfigArgs {
    file: Option<PathBuf>,
    overrides: Vec<(&'static str, String)>,
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut c = ConfigArgs::default();
        c.update_from_arg_matches(m)?;
        Ok(c)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        if let Some(f) = m.get_one::<PathBuf>("config") {
            self.file = Some(f.clone());
        }
        for (key, _) in KEYS {
            if let Some(v) = m.get_one::<String>(key) {
                self.overrides.push((key, v.clone()));
            }
        }
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: Command) -> Command {
        let cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value config file")
                .help_heading("Configuration"),
        );
        KEYS.iter().fold(cmd, |cmd, (key, help)| {
            cmd.arg(
                Arg::new(*key)
                    .long(key.replace('_', "-"))
                    .value_name("VALUE")
                    .allow_hyphen_values(true)
                    .help(*help)
                    .help_heading("Configuration"),
            )
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evcomp: {e:#}");
            ExitCode::FAILURE
        }
    }
}
