fn main() {
    println!("wmm");
}
