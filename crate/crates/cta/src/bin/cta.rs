fn main() {
    // die quietly when a downstream pager closes the pipe
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(cta::cli::run());
}
