mod common;

#[test]
fn central_differences_converge() {
    for seed in 0..5 {
        let orders = common::derivative_orders(seed);
        assert_eq!(orders.len(), 5);
        for (name, ord) in &orders {
            if let Some(o) = ord {
                assert!(*o >= 1.9, "{name}: observed order {o:.3}");
            }
        }
        // F is cubic, so only these two carry a genuine h^2 error.
        for name in ["D_uF", "D_lambdauF"] {
            let o = orders.iter().find(|(n, _)| n == name).unwrap().1;
            assert!(o.is_some_and(|o| o >= 1.9), "{name}: {o:?}");
        }
    }
}
