//! Shows how program output is compared with the expected lines.

use codeval::evaluator::compare_output;

fn main() {
    let expected = vec!["Hello ben".to_string()];
    for actual in [
        &b"Hello ben\n"[..],
        b"Hello ben",
        b"hello world\n",
        b"Hello ben\nextra\n",
        b"Hello ben\r\n",
    ] {
        let diff = compare_output(&expected, actual);
        println!("actual {:?}", String::from_utf8_lossy(actual));
        if diff.is_empty() {
            println!("  matches");
        }
        for line in diff.render(20) {
            println!("  {line}");
        }
    }
}
