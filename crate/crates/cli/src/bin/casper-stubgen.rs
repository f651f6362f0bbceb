//! Reference stub for the external generator protocol.
//!
//! Reads one JSON request per line from stdin (`{"id":..., "input":...}`)
//! and writes one JSON response per line to stdout (`{"id":..., "output":...}`).
//! Useful for exercising generator integrations without a neural model:
//!
//! ```text
//! casper eval --generator "process:casper-stubgen --mode echo" ...
//! ```
//!
//! Modes: `echo` (first exemplar's MR), `fixed` (always `--output`),
//! `garbage` (a non-MR string), `silent` (never answers), `reverse-pairs`
//! (answers request pairs in reversed order, for id-matching tests).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use casper_core::augmentation::{split_augmented, AugmentationConfig};
use casper_core::mr::serialize_mr;

#[derive(Deserialize)]
struct WireRequest {
    id: String,
    input: String,
}

#[derive(Serialize)]
struct WireResponse<'a> {
    id: &'a str,
    output: &'a str,
}

fn respond(id: &str, output: &str) {
    let line = serde_json::to_string(&WireResponse { id, output }).expect("response serializes");
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(line.as_bytes()).expect("stdout");
    stdout.write_all(b"\n").expect("stdout");
    stdout.flush().expect("stdout");
}

fn echo_output(input: &str, config: &AugmentationConfig) -> String {
    match split_augmented(input, config) {
        Ok(split) => serialize_mr(&split.exemplars[0].1),
        Err(e) => format!("ERROR {e}"),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mut mode = "echo".to_string();
    let mut fixed_output = "[IN a = b]".to_string();
    let mut i = 1;
    while i < args.len() {
        match args[i].as_str() {
            "--mode" if i + 1 < args.len() => {
                mode = args[i + 1].clone();
                i += 2;
            }
            "--output" if i + 1 < args.len() => {
                fixed_output = args[i + 1].clone();
                i += 2;
            }
            other => {
                eprintln!("unknown argument {other:?}");
                std::process::exit(2);
            }
        }
    }

    let config = AugmentationConfig::default();
    let stdin = std::io::stdin().lock();
    let mut buffered: Option<WireRequest> = None;
    for line in stdin.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let Ok(request) = serde_json::from_str::<WireRequest>(&line) else {
            continue;
        };
        match mode.as_str() {
            "echo" => respond(&request.id, &echo_output(&request.input, &config)),
            "fixed" => respond(&request.id, &fixed_output),
            "garbage" => respond(&request.id, "this is not a meaning representation"),
            "silent" => {}
            "reverse-pairs" => match buffered.take() {
                None => buffered = Some(request),
                Some(first) => {
                    respond(&request.id, &echo_output(&request.input, &config));
                    respond(&first.id, &echo_output(&first.input, &config));
                }
            },
            other => {
                eprintln!("unknown mode {other:?}");
                std::process::exit(2);
            }
        }
    }
}
