use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use waldo::data::digits::render_digit;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for digit in 0..10 {
        let img = render_digit(digit, &mut rng);
        println!("--- digit {digit} ---");
        for r in 0..28 {
            let row: String = (0..28)
                .map(|c| {
                    let v = img[r * 28 + c];
                    if v > 0.7 { '#' } else if v > 0.35 { '+' } else if v > 0.12 { '.' } else { ' ' }
                })
                .collect();
            println!("{row}");
        }
    }
}
