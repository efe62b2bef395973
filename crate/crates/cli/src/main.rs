fn main() {
    std::process::exit(agentgraph_cli::main_with_args(std::env::args_os()));
}
