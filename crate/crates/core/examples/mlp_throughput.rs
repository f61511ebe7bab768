//! Times batched forward+backward passes for a few network widths.

use std::time::Instant;

use opac_core::diffcore::{Activation, Matrix, Mlp, MlpSpec};
use opac_core::seeding::{SeedFan, Stream};

fn main() -> opac_core::Result<()> {
    let mut rng = SeedFan::new(0).stream(Stream::Init);
    for (hidden, batch) in [(32, 32), (64, 64), (64, 128), (128, 128), (256, 256)] {
        let mut net = Mlp::new(
            MlpSpec::new(13, vec![hidden, hidden], 2, Activation::Tanh),
            &mut rng,
        )?;
        let x = Matrix::from_vec(
            batch,
            13,
            (0..batch * 13).map(|i| (i as f64 * 0.37).sin()).collect(),
        )?;
        let reps = 200;
        let start = Instant::now();
        for _ in 0..reps {
            let (out, cache) = net.forward_cached(&x)?;
            net.backward(&cache, &out, false)?;
        }
        let per = start.elapsed().as_secs_f64() / reps as f64;
        println!(
            "hidden {hidden:>3} batch {batch:>3}: {:.3} ms per forward+backward",
            per * 1e3
        );
    }
    Ok(())
}
