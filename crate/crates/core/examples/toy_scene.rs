//! Write a toy scene directory usable with `mix2mix edit`.
//!
//! `cargo run --example toy_scene -- OUT_DIR [VIEWS] [SEED]`

use std::path::PathBuf;

use anyhow::Context;
use mix2mix::scene_io::save_scene;
use mix2mix::toy::make_toy_world;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().context("usage: toy_scene OUT_DIR [VIEWS] [SEED]")?);
    let views: usize = args.next().map(|v| v.parse()).transpose()?.unwrap_or(4);
    let seed: u64 = args.next().map(|v| v.parse()).transpose()?.unwrap_or(0);
    let (_, scene) = make_toy_world(views, 16, seed)?;
    save_scene(&scene, &out)?;
    println!("wrote {views} views to {}", out.display());
    Ok(())
}
