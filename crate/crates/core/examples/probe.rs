use std::time::Instant;
use tsoverify::mc::ExploreOptions;
use tsoverify::param::{abstractify, check_lemmas_concrete, check_parameterized, parse_param_file};
use tsoverify::protocol::ProtocolConfig;

fn main() {
    let r = std::fs::read_to_string("fixtures/param/restrictions.txt").unwrap();
    let l = std::fs::read_to_string("fixtures/param/lemmas.txt").unwrap();
    let (rs, _) = parse_param_file(&r).unwrap();
    let (_, ls) = parse_param_file(&l).unwrap();
    let cfg = ProtocolConfig::new(2, 2, 2).unwrap();

    let t = Instant::now();
    let lr = check_lemmas_concrete(cfg, &ls, &ExploreOptions::default()).unwrap();
    println!("concrete lemmas: pass={} states={} {:?}", lr.pass(), lr.stats.states, t.elapsed());
    if let Some((name, v)) = &lr.failure {
        println!("FAILED LEMMA {name}: path len {}", v.path.len());
        for s in &v.path { println!("  {} [{}]", s.rule, s.binding); }
        println!("{}", v.final_dump);
        return;
    }

    let am = abstractify(cfg, rs, ls).unwrap();
    let t = Instant::now();
    let pr = check_parameterized(&am, ExploreOptions::default()).unwrap();
    println!("abstract: pass={} states={} depth={} {:?}", pr.pass(), pr.stats.states, pr.stats.depth, t.elapsed());
    if let Some(v) = &pr.violation {
        println!("kind: {:?}  trigger: {:?}", v.kind, pr.abstract_trigger);
        for s in &v.path { println!("  {} [{}]", s.rule, s.binding); }
        println!("{}", v.final_dump);
    }
}
