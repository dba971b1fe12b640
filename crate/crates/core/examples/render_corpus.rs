//! Schedules exposures of a bioS set, packs them into training windows,
//! and mixes the same useful stream with random junk biographies.
//!
//!     cargo run --release --example render_corpus

use caplab::corpus::junk::RANDOM_JUNK_N;
use caplab::corpus::render::BioSLexicon;
use caplab::corpus::{
    add_bios_tables, build_vocab, mix_with_junk, pack_windows, schedule_exposures, ExposurePlan, JunkSpec, JunkStream,
    MixturePlan, Renderer, Source, TemplateMode, TemplateSet,
};
use caplab::knowledge::{gen_bios, BioSSpec};

fn main() -> caplab::Result<()> {
    let kb = gen_bios(BioSSpec { n: 200, seed: 3 })?;
    let mut vocab = build_vocab(&TemplateSet::bios(), Some(&kb));
    add_bios_tables(&mut vocab);
    let r = Renderer::new(&kb, &vocab)?;
    let plan = ExposurePlan { exposures: 10, template_mode: TemplateMode::MultiPermute, seed: 5 };

    let paragraphs: Vec<_> = schedule_exposures(&r, plan)?.collect();
    let tokens: usize = paragraphs.iter().map(|p| p.tokens.len() + 1).sum();
    println!("{} paragraphs, {tokens} tokens including EOS", paragraphs.len());
    let windows = pack_windows(paragraphs, 512).collect::<caplab::Result<Vec<_>>>()?;
    let split = windows.iter().map(|w| w.fragments.iter().filter(|f| f.offset > 0).count()).sum::<usize>();
    println!("{} windows of 512; {split} paragraphs continue across a window boundary", windows.len());
    println!("first window starts: {}", vocab.decode(&windows[0].tokens[..24]));

    let lex = BioSLexicon::new(&vocab)?;
    let junk = JunkSpec { n_prime: RANDOM_JUNK_N, seed: 9 };
    let mix = MixturePlan { special_token_on_useful: true, ..MixturePlan::new(junk) };
    let mixed = mix_with_junk(schedule_exposures(&r, plan)?, JunkStream::new(&lex, junk)?, &mix, 512)?
        .collect::<caplab::Result<Vec<_>>>()?;
    let useful = mixed.iter().filter(|w| w.source() == Some(Source::Useful)).count();
    println!("mixed with 7/8 junk: {} windows, {useful} purely useful", mixed.len());
    Ok(())
}
