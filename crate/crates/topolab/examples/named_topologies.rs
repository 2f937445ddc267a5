//! Build every named family at n=6 and print edges, sparsity and degrees.
//!
//!     cargo run --example named_topologies

use topolab::rng::stream;
use topolab::topology::{build_named, TopologyKind};

fn main() -> topolab::Result<()> {
    let kinds = [
        TopologyKind::Full,
        TopologyKind::Chain,
        TopologyKind::Star,
        TopologyKind::Layered(2),
        TopologyKind::Random(0.4),
        TopologyKind::Tree(2),
    ];
    let n = 6;
    for kind in kinds {
        let mut rng = stream(7, &[0x10e0]);
        let t = build_named(&kind, n, &mut rng)?;
        let degrees: Vec<usize> =
            (0..n).map(|i| t.degree(i)).collect::<topolab::Result<_>>()?;
        println!("{kind:<10} edges={:<2} sparsity={:.3}", t.edge_count(), t.sparsity()?);
        println!("  receiver←sender: {:?}", t.edges());
        println!("  degrees: {degrees:?}");
    }
    Ok(())
}
