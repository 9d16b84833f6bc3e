use clap::Parser;

fn main() {
    let args = nbrepro::mock::ExecArgs::parse();
    std::process::exit(nbrepro::mock::mock_exec_main(args));
}
