// Placeholder main; the real subcommand wiring lands with the cli module.
int main() { return 0; }
