//! Classify one point of the cubic model and evaluate its obstruction
//! tensor; the README walks through this snippet.

use corank2::catalog::load_model;
use corank2::ellipticity::classify_point;
use corank2::obstruction::s_tensor;
use corank2::scalar::Point;

fn main() -> Result<(), corank2::Error> {
    let model = load_model("cubic", None)?;
    let p = Point([0.0, 0.3, 0.0, 0.0, 0.0, 0.0]);

    let class = classify_point(&model.distribution, &p, 1e-9)?;
    assert_eq!(class.kind.label(), "elliptic");
    println!("kind: {}", class.kind.label());
    println!("det:  {:.12e}", class.det_raw);

    let s = s_tensor(&model.distribution, &p)?;
    assert!(s.norm > 1e-4);
    println!("|S|:  {:.12e}", s.norm);
    Ok(())
}
