//! Generates a bioS and a bioD knowledge base, prints their exact
//! information content and one rendered biography of each.
//!
//!     cargo run --release --example generate_knowledge

use caplab::corpus::{build_vocab, Renderer, TemplateMode, TemplateSet};
use caplab::knowledge::{gen_biod, gen_bios, kb_stats, write_jsonl, BioDSpec, BioSSpec, KnowledgeBase};

fn show(kb: &KnowledgeBase, templates: &TemplateSet, mode: TemplateMode) -> caplab::Result<()> {
    let s = kb_stats(kb);
    println!(
        "{} N={} K={}: names {:.0} bits, values {:.0} bits, diversity {:.0} bits, upper bound {:.0} bits ({:.2} bits/person)",
        s.family, s.n, s.k, s.name_bits, s.value_bits, s.diversity_bits, s.upper_bound_bits, s.per_person_bits
    );
    let vocab = build_vocab(templates, Some(kb));
    let r = Renderer::new(kb, &vocab)?;
    println!("  vocabulary {} tokens", vocab.len());
    println!("  canonical: {}", vocab.decode(&r.canonical(0)?.tokens));
    println!("  rewritten: {}", vocab.decode(&r.render(0, mode, 7)?.tokens));
    Ok(())
}

fn main() -> caplab::Result<()> {
    let bios = gen_bios(BioSSpec { n: 1000, seed: 1 })?;
    show(&bios, &TemplateSet::bios(), TemplateMode::MultiPermute)?;

    let spec = BioDSpec { n: 500, k: 4, c: 2, d: 16, l: 4, t: 32, n0: 1 << 20, seed: 1 };
    let biod = gen_biod(spec)?;
    show(&biod, &TemplateSet::biod(spec.k), TemplateMode::FixedTemplate)?;

    let mut jsonl = Vec::new();
    write_jsonl(&biod, &mut jsonl)?;
    println!(
        "bioD JSONL: {} bytes, first line {}",
        jsonl.len(),
        String::from_utf8_lossy(jsonl.split(|&b| b == b'\n').next().unwrap_or(&[]))
    );
    Ok(())
}
