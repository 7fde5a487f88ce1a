//! Reads an MDP from the TOML text format, evaluates it, and writes it back.

use transient_pg::evaluation::optimal_reference;
use transient_pg::format::{emit_mdp, parse_mdp};

const CHAIN: &str = r#"
n_states = 3
n_actions = 2
transitions = [
  { s = 0, a = 0, "s'" = 1, p = 1.0 },
  { s = 0, a = 1, "s'" = 0, p = 0.5 },
  { s = 0, a = 1, "s'" = 2, p = 0.5 },
  { s = 1, a = 0, "s'" = 2, p = 1.0 },
  { s = 1, a = 1, "s'" = 2, p = 1.0 },
  { s = 2, a = 0, "s'" = 2, p = 1.0 },
  { s = 2, a = 1, "s'" = 2, p = 1.0 },
]
rewards = [
  { s = 0, a = 1, "s'" = 2, r = 1.0 },
  { s = 1, a = 1, r = 0.8 },
]
mu = [ { s = 0, p = 1.0 } ]
"#;

fn main() -> transient_pg::Result<()> {
    let mdp = parse_mdp(CHAIN)?;
    let opt = optimal_reference(&mdp)?;
    println!("V* = {:?}, actions {:?}", opt.v_star.as_slice(), opt.actions());
    let text = emit_mdp(&mdp);
    assert_eq!(parse_mdp(&text)?, mdp);
    print!("{text}");
    Ok(())
}
