//! Type-token ratio, coverage and similarity on a pair of texts.
//!
//! ```text
//! cargo run --example text_metrics -- "first text" "second text"
//! ```

use autorecipe::text_metrics::{coverage, coverage_weighted, lexical_similarity, tokenize, ttr};

fn main() {
    let mut args = std::env::args().skip(1);
    let a = args.next().unwrap_or_else(|| "A wind turbine converts wind into electricity.".into());
    let b = args.next().unwrap_or_else(|| "A wind turbine converts the kinetic energy of wind into electrical energy.".into());

    for (name, text) in [("a", &a), ("b", &b)] {
        let p = tokenize(text);
        println!("{name}: {} tokens, {} types, ttr {:.3}", p.total_count(), p.unique_count(), ttr(text).unwrap());
    }
    println!("coverage a->b {:.1}%", coverage(&a, &b).unwrap());
    println!("weighted coverage a->b {:.1}%", coverage_weighted(&a, &b).unwrap());
    println!("similarity {:.4}", lexical_similarity(&a, &b).unwrap());
}
