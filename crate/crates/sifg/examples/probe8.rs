use sifg::rng::RngStream;
fn main() {
    let mut s = RngStream::new(3, 100, 0, 0);
    println!("# 2d means (mean_seed 3, tag 100)");
    for _ in 0..5 {
        let mut m = [0.0; 2];
        s.fill_standard_normal(&mut m);
        println!("  [{:?}, {:?}],", m[0], m[1]);
    }
    let mut s = RngStream::new(15, 100, 0, 0);
    println!("# 2d means backup (mean_seed 15, tag 100)");
    for _ in 0..5 {
        let mut m = [0.0; 2];
        s.fill_standard_normal(&mut m);
        println!("  [{:?}, {:?}],", m[0], m[1]);
    }
    let mut s = RngStream::new(1, 101, 0, 0);
    println!("# 10d means (mean_seed 1, tag 101)");
    for _ in 0..5 {
        let mut m = [0.0; 10];
        s.fill_standard_normal(&mut m);
        println!("  {:?},", m.to_vec());
    }
}
