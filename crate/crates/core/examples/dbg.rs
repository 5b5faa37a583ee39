use softner::coderec::*;
use softner::lm::{LmLevel, NgramLm};
use softner::neural::{seeded_rng, AdamConfig, TrainConfig};
use softner::signals::SubwordConfig;
use softner::synth;

fn main() {
    let mut rng = seeded_rng(1000);
    let prose = synth::prose_corpus(&mut rng, 3000);
    let code = synth::code_corpus(&mut rng, 3000, &synth::DEFAULT_CODE_CHARSET);
    let vocab = synth::vocab_of(&prose);
    let lms = || CodeRecLms {
        prose_word: NgramLm::train(&prose, LmLevel::Word, 1, 0.1).unwrap(),
        code_word: NgramLm::train(&code, LmLevel::Word, 1, 0.1).unwrap(),
        prose_char: NgramLm::train(&prose, LmLevel::Char, 6, 0.01).unwrap(),
        code_char: NgramLm::train(&code, LmLevel::Char, 6, 0.01).unwrap(),
    };
    let mut entries = synth::lexicon(&mut seeded_rng(77), 430, &synth::DEFAULT_CODE_CHARSET, &vocab);
    let test = entries.split_off(entries.len() - 290);
    for (sub, lr, epochs) in [(true, 1e-3, 15), (true, 3e-3, 15), (false, 1e-3, 15)] {
        let cfg = CodeRecConfig {
            subword: SubwordConfig { buckets: 1 << 11, dim: 16, ..SubwordConfig::default() },
            use_subword: sub,
            train: TrainConfig { epochs, optimizer: AdamConfig { lr, ..AdamConfig::default() } },
            ..CodeRecConfig::default()
        };
        let (_, report) = train_coderec(&entries, &test, lms(), cfg, 42).unwrap();
        println!(
            "sub={sub} lr={lr} epochs={epochs}: train F1 {:.3} test F1 {:.3}",
            report.train.f1, report.test.f1
        );
    }
}
