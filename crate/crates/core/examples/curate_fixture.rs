//! Runs the curation pipeline over the bundled fixtures with the offline
//! keyword classifier.
//!
//! cargo run --release --example curate_fixture

use emberforge::curation::{curate, CurationConfig, MockClient, Screener};
use emberforge::fixtures;
use emberforge::render::RenderConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = CurationConfig::default();
    let screener = Screener { config: RenderConfig { resolution: 64, samples_per_pixel: 4, ..Default::default() }, ..Default::default() };
    let client = MockClient::default_keywords();
    for name in fixtures::FIXTURE_NAMES {
        let asset = fixtures::by_name(name).expect("known fixture");
        let v = curate(&asset, &cfg, &client, &screener)?;
        let reason = v.rejection_reason.map(|r| r.as_str()).unwrap_or("-");
        println!("{name:<20} accepted {:<5} reason {reason:<20} strengths {:?}", v.accepted, v.valid_strengths);
    }
    Ok(())
}
