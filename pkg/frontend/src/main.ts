import { boot } from "./app.js";

window.addEventListener("DOMContentLoaded", () => {
  void boot();
});
