use clap::Parser;
use wedflow::cli::{resolve_threads, run, Cli, EXIT_CONFIG};

fn main() {
    let cli = Cli::parse();
    let threads = match resolve_threads(cli.threads) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(EXIT_CONFIG);
        }
    };
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("config error: cannot start thread pool: {e}");
            std::process::exit(EXIT_CONFIG);
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    let Some(config) = cli.config else {
        eprintln!("config error: --config PATH is required");
        std::process::exit(EXIT_CONFIG);
    };
    std::process::exit(run(cli.command, &config, cli.out.as_deref(), cli.tol));
}
