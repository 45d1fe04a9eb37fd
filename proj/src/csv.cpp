namespace apr {
}
