use dynlab::links::*;
fn main() {
    match build_bilink_model(LinkLayout::standalone()) {
        Ok(m) => println!("ok, n_hyp = {}, dev = {:.3e}", m.n_hyp, m.normal_form_deviation()),
        Err(e) => println!("build error: {e}"),
    }
    match build_four_link_models() {
        Ok(_) => println!("four-link ok"),
        Err(e) => println!("four-link error: {e}"),
    }
}
