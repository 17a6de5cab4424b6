fn main() -> std::process::ExitCode {
    fgf_chaos::main()
}
