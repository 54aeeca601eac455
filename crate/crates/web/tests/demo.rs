use disparse_web::Demo;

#[test]
fn same_seed_same_demo() {
    let a = Demo::build(5, 3).unwrap();
    let b = Demo::build(5, 3).unwrap();
    assert_eq!(a.summary_json(), b.summary_json());
    assert_eq!(a.matrix_json("pmi").unwrap(), b.matrix_json("pmi").unwrap());
    let thread = "so cuecriticalquestion\nwell\n\n";
    assert_eq!(a.parse_thread(thread).unwrap(), b.parse_thread(thread).unwrap());
}

#[test]
fn empty_thread_is_empty() {
    let d = Demo::build(3, 0).unwrap();
    assert_eq!(d.parse_thread("\n  \n").unwrap(), "[]");
}
