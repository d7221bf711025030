//! Writes a snapshot and a checkpoint, reads them back, and shows that a
//! run resumed from the checkpoint lands on the same state.
//!
//! `cargo run --release --example snapshot_checkpoint`

use nss_etd::integrators::{Cadence, NssTerm, RunState, Runner};
use nss_etd::io::{random_field, read_checkpoint, read_snapshot, write_checkpoint, write_snapshot};
use nss_etd::io::{Checkpoint, Header, Snapshot};
use nss_etd::{GridSpec, ModelParams, SchemeParams, StepSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("nss-etd-example");
    std::fs::create_dir_all(&dir)?;
    let grid = GridSpec::new(12.8, 64)?;
    let model = ModelParams::new(0.005)?;
    let p = SchemeParams::setdms2(model, 0.125);
    let sched = StepSchedule::piecewise(&[(0.01, 1.0), (0.02, f64::INFINITY)], 2.0)?;
    let u0 = random_field(grid, 0.05, 3);
    let header = Header::new(&p, &grid, 0.0, 3);

    let snap_path = dir.join("initial.bin");
    write_snapshot(&snap_path, &Snapshot { header, field: u0.clone() })?;
    let back = read_snapshot(&snap_path)?;
    println!("snapshot {}: M = {}, identical = {}", snap_path.display(), back.header.points, back.field == u0);

    let straight = Runner::new(p, sched.clone(), NssTerm::new(grid, &model))
        .cadence(Cadence::endpoints())
        .run(RunState::start(&u0), |_, _| {})?;

    let half = Runner::new(p, sched.clone(), NssTerm::new(grid, &model))
        .cadence(Cadence::endpoints())
        .stop_at(Some(1.3))
        .run(RunState::start(&u0), |_, _| {})?;
    let ckpt_path = dir.join("checkpoint.bin");
    write_checkpoint(&ckpt_path, &Checkpoint { header: Header { t: half.stepper.t, ..header }, state: half })?;
    let ckpt = read_checkpoint(&ckpt_path)?;
    println!("checkpoint at t = {}, segment {}", ckpt.header.t, ckpt.state.segment);

    let resumed = Runner::new(p, sched, NssTerm::new(grid, &model))
        .cadence(Cadence::endpoints())
        .run(ckpt.state, |_, _| {})?;
    let gap = resumed.stepper.u_curr().max_abs_diff(&straight.stepper.u_curr())?;
    println!("t = {}: max |resumed - straight| = {gap:e}", resumed.stepper.t);
    Ok(())
}
