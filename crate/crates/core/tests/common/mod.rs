//! Shared fixtures for the integration suites.

use rncrf::corpus::{parse_conll, Corpus};

/// Template-generated training corpus: 20 sentences over the three
/// dependency relations `nsubj`, `dobj`, `det`, with a consistent
/// word-to-label mapping and both aspect and opinion chunks. Every template
/// instance uses its own content words, so an overfit model can reach
/// perfect training F1.
pub fn synthetic_corpus_text() -> String {
    let subjects = ["i", "we", "they", "you", "folks"];
    let transitive = ["like", "love", "hate", "enjoy", "admire"];
    let intransitive = ["rocks", "stinks", "shines", "disappoints", "delights"];
    let simple_aspects = ["food", "service", "menu", "decor", "coffee"];
    let compound_aspects = [
        ("delivery", "times"),
        ("battery", "life"),
        ("wine", "list"),
        ("screen", "quality"),
        ("price", "tags"),
    ];
    let bare_aspects = ["sushi", "pizza", "pasta", "burgers", "salads"];

    let mut blocks = Vec::new();
    for k in 0..5 {
        // "{subj} {verb} the {aspect}"
        blocks.push(format!(
            "1\t{}\tPRON\t2\tnsubj\tO\n2\t{}\tVERB\t0\troot\tBO\n3\tthe\tDET\t4\tdet\tO\n4\t{}\tNOUN\t2\tdobj\tBA\n",
            subjects[k], transitive[k], simple_aspects[k]
        ));
        // "the {aspect} {verb}"
        blocks.push(format!(
            "1\tthe\tDET\t2\tdet\tO\n2\t{}\tNOUN\t3\tnsubj\tBA\n3\t{}\tVERB\t0\troot\tBO\n",
            simple_aspects[k], intransitive[k]
        ));
        // "{subj} {verb} the {mod} {noun}"
        let (modifier, noun) = compound_aspects[k];
        blocks.push(format!(
            "1\t{}\tPRON\t2\tnsubj\tO\n2\t{}\tVERB\t0\troot\tBO\n3\tthe\tDET\t5\tdet\tO\n4\t{}\tNOUN\t5\tdet\tBA\n5\t{}\tNOUN\t2\tdobj\tIA\n",
            subjects[(k + 2) % 5], transitive[(k + 1) % 5], modifier, noun
        ));
        // "{subj} {verb} {aspect}"
        blocks.push(format!(
            "1\t{}\tPRON\t2\tnsubj\tO\n2\t{}\tVERB\t0\troot\tBO\n3\t{}\tNOUN\t2\tdobj\tBA\n",
            subjects[(k + 3) % 5], transitive[(k + 2) % 5], bare_aspects[k]
        ));
    }
    blocks.join("\n")
}

pub fn synthetic_corpus() -> Corpus {
    parse_conll(synthetic_corpus_text().as_bytes()).expect("fixture parses")
}
