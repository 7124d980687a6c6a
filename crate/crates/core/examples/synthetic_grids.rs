//! Writes the bundled multi-area grids as JSON into a directory
//! (default `scenarios/`).

use std::path::PathBuf;

use modalwadc::report::write_json;
use modalwadc::synthetic;

fn main() -> modalwadc::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("scenarios"), PathBuf::from);
    std::fs::create_dir_all(&dir).expect("create output directory");
    for (name, spec) in [
        ("grid4.json", synthetic::four_machine()),
        ("grid8.json", synthetic::eight_machine()),
        ("grid16.json", synthetic::sixteen_machine()),
    ] {
        let model = spec.build()?;
        write_json(dir.join(name), &model.to_file())?;
        println!("{}", dir.join(name).display());
    }
    Ok(())
}
