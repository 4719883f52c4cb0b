//! Writes a small planted-vocabulary corpus: `planted_corpus <dir> [docs per class]`.

use gradrules::synth::PlantedCorpus;

fn main() -> gradrules::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "planted".to_string());
    let docs_per_class = args.next().and_then(|n| n.parse().ok()).unwrap_or(10);
    PlantedCorpus { docs_per_class, ..PlantedCorpus::default() }.write(dir.as_ref())?;
    println!("wrote {dir}");
    Ok(())
}
