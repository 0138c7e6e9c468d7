// Placeholder entry point; subcommands land with the runner module.
int main() { return 0; }
