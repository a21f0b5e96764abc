fn main() {
    std::process::exit(mealcast::cli::run_from_env());
}
