#![no_main]

use ampsize::cli::Cli;
use clap::Parser;
use libfuzzer_sys::fuzz_target;

// NUL-separated argument list; parsing only, nothing is executed.
fuzz_target!(|data: &[u8]| {
    let args = std::iter::once("ampsize".to_owned())
        .chain(data.split(|&b| b == 0).map(|a| String::from_utf8_lossy(a).into_owned()));
    let _ = Cli::try_parse_from(args);
});
