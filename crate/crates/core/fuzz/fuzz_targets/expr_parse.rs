#![no_main]

use libfuzzer_sys::fuzz_target;
use relosc::expr::Expr;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(e) = Expr::parse(src) {
        let printed = e.to_string();
        let again = Expr::parse(&printed).expect("printed expressions parse");
        assert_eq!(printed, again.to_string());
        let _ = e.eval(1.5);
    }
});
