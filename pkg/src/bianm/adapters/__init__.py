# CLI controller and rich presenter
